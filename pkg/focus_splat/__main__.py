import sys

from focus_splat.cli import main

sys.exit(main())
