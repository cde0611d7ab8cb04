import sys

from antientropy.cli import main

sys.exit(main())
