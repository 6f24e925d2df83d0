import sys

from contrail.cli import main

sys.exit(main())
