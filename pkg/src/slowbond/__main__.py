import sys

from slowbond.cli import main

sys.exit(main())
