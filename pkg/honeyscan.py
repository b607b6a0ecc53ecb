#!/usr/bin/env python
"""Run honeyscope from a source checkout: python honeyscan.py <command> [options]"""

import sys

from honeyscope.cli import main

if __name__ == '__main__':
    sys.exit(main())
