import sys

from lcvn.cli import main

sys.exit(main())
