import sys

from caremesh.harness.cli import main

sys.exit(main())
