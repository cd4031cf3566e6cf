import os
import logging
from dotenv import load_dotenv

# Load .env file
load_dotenv()

LOG_LEVEL = os.getenv("ADAPTSR_LOG_LEVEL", "INFO")
RUNS_DIR = os.getenv("ADAPTSR_RUNS_DIR", "runs")
NUM_THREADS = int(os.getenv("ADAPTSR_NUM_THREADS", "0"))
RUN_SLOW_TESTS = os.getenv("ADAPTSR_RUN_SLOW", "0") == "1"


def configure_logging(level: str = LOG_LEVEL) -> None:
    """
    Installs one stream handler on the package logger.
    Messages carry their own "[Component]" tag, so the format is bare.
    """
    logger = logging.getLogger("adaptsr")
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(handler)
    logger.setLevel(level.upper())
    logger.propagate = False
