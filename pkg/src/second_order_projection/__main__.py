"""Entry point for the second-order projection command line."""

import logging
import sys

from second_order_projection.cli import main as cli_main


def main():
    """Main entry point for the second-order-projection command."""
    try:
        sys.exit(cli_main())
    except KeyboardInterrupt:
        logging.warning("Interrupted")
        sys.exit(130)


if __name__ == "__main__":
    main()
