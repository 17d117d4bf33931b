import sys

from npglab.cli import main

sys.exit(main())
