import sys

from nlhodge.cli import main

sys.exit(main())
