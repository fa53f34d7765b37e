import sys

from plqmc.cli import main

sys.exit(main())
