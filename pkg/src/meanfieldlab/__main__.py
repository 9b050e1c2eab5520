import sys

from meanfieldlab.cli import main

sys.exit(main())
