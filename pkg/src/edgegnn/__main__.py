import sys

from edgegnn.harness.cli import main

sys.exit(main())
