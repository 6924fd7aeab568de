import sys

from bmclt.cli import main

sys.exit(main())
