"""Run the pilemap CLI from a source checkout: ``python main.py simulate``."""

import sys

from backend.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
