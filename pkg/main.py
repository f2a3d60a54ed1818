import sys

from absa_consensus.cli import main

if __name__ == '__main__':
    sys.exit(main())
