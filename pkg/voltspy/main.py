"""Entry point for the voltspy command line."""

import logging
import sys
from typing import Sequence

from voltspy.cli import COMMANDS, build_parser, run_config
from voltspy.config import Settings, get_log_level_int

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE_ERROR = 2


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(
        level=get_log_level_int(),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    try:
        settings = Settings.from_env()
    except ValueError as exc:
        logger.error("Configuration error: %s", exc)
        return EXIT_DATA_ERROR

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = run_config(args)
    except ValueError as exc:
        logger.error("Usage error: %s", exc)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE_ERROR

    logger.info("Running command=%s seed=%d threads=%d", config.command, config.seed, settings.threads)
    try:
        return COMMANDS[config.command](config, settings)
    except (ValueError, OSError) as exc:
        logger.error("Command %s failed: %s", config.command, exc)
        return EXIT_DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
