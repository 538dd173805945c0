import sys

from sopool.cli import main

sys.exit(main())
