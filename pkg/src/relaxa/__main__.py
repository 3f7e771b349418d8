"""Allow running as ``python -m relaxa``."""
import sys

from relaxa.cli import main

sys.exit(main())
