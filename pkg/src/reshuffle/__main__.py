import sys

from reshuffle.cli import main

sys.exit(main())
