import sys

from gr3dkit.cli import main

if __name__ == "__main__":
    sys.exit(main())
