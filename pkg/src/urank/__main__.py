import sys

from urank.cli import main

sys.exit(main())
