# HeraldComb: runs in a standard CPython 3.9+ environment.
import sys

from HeraldComb_CLI.main import main

sys.exit(main())
