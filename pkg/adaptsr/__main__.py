import sys

from adaptsr.main import main

sys.exit(main())
