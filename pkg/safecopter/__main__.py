import sys

from safecopter.cli import main

sys.exit(main())
