import sys

from ccsbeam.cli import main

sys.exit(main())
