import sys

from hybridlsh.cli import main

sys.exit(main())
