import sys

from hesslab.cli import main

sys.exit(main())
