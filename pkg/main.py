"""Thin wrapper for backward compatibility. See relaxa.cli for implementation."""
import sys

from relaxa.cli import main

if __name__ == "__main__":
    sys.exit(main())
