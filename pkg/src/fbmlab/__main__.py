"""Allow running with ``python -m fbmlab``."""

import sys

from fbmlab.cli import main

sys.exit(main())
