import sys

from uzip.cli import main

sys.exit(main())
