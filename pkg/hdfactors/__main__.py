import sys

from hdfactors.cli import main


sys.exit(main())
