"""Allow nibblescan to be run as python -m nibblescan."""

import sys

from nibblescan.cli import main

if __name__ == "__main__":
    sys.exit(main())
