import sys

from dpvi.cli import main

sys.exit(main())
