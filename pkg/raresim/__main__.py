"""Allow running as: python -m raresim"""
import sys

from raresim.cli import main

sys.exit(main())
