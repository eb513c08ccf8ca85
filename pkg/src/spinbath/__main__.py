import sys

from spinbath.cli import main

sys.exit(main())
