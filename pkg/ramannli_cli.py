#!/usr/bin/env python3
"""
ramannli CLI - closed-form NLI estimation for Raman-amplified links
"""

import sys

from app.interfaces.cli import main

if __name__ == '__main__':
    sys.exit(main())
