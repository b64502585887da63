import sys

from swsl.cli import main

sys.exit(main())
