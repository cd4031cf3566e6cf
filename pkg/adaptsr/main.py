import logging
import sys
from typing import Optional, Sequence

import torch

from adaptsr.cli.commands import COMMANDS
from adaptsr.cli.parser import UsageError, parse_cli
from adaptsr.config.settings import NUM_THREADS, configure_logging
from adaptsr.errors import AdaptSRError, InvalidConfigError

logger = logging.getLogger("adaptsr.main")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """
    Exit codes: 0 success, 1 usage / config error, 2 runtime error.
    Messages for 1 and 2 go to stderr.
    """

    # =========================
    # STEP 1: Parse the command line
    # Known flags per subcommand; everything else must be --section.key overrides
    # =========================
    try:
        args, overrides = parse_cli(argv)
    except UsageError as e:
        sys.stderr.write(e.usage)
        sys.stderr.write(f"adaptsr: error: {e}\n")
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    if NUM_THREADS > 0:
        torch.set_num_threads(NUM_THREADS)

    # =========================
    # STEP 2: Dispatch
    # Config problems are usage errors; anything else raised by the library is a runtime error
    # =========================
    try:
        return COMMANDS[args.command](args, overrides)
    except InvalidConfigError as e:
        sys.stderr.write(f"adaptsr {args.command}: invalid configuration: {e}\n")
        return EXIT_USAGE
    except (AdaptSRError, OSError) as e:
        sys.stderr.write(f"adaptsr {args.command}: {e}\n")
        return EXIT_RUNTIME


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging()
    return run_cli(argv)


if __name__ == "__main__":
    sys.exit(main())
