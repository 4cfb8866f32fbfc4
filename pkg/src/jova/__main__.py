import sys

from jova.cli.main import main

sys.exit(main())
