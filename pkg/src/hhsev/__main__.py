import sys

from hhsev.cli import main

sys.exit(main())
