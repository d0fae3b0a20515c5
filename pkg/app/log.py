import logging
import sys

import structlog


def _stderr_logger(*args):
    # resolved per logger so a replaced sys.stderr (pytest capture) is picked up
    return structlog.PrintLogger(file=sys.stderr)


def configure_logging(verbose=False):
    """Route structlog output to stderr so stdout stays free for --json."""
    level = logging.DEBUG if verbose else logging.INFO
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso", utc=True),
            structlog.processors.KeyValueRenderer(
                key_order=["timestamp", "level", "event"], sort_keys=True
            ),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        logger_factory=_stderr_logger,
        cache_logger_on_first_use=False,
    )
