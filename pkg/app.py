#!/usr/bin/env python3
import sys

from qvmanifold.handler import main


if __name__ == '__main__':
    sys.exit(main())
