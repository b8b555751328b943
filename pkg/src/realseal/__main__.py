import sys

from realseal.cli import main

sys.exit(main())
