import sys

from staticarb.cli import main

sys.exit(main())
