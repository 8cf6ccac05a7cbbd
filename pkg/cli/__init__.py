"""
CLI module for softflip.
"""

__version__ = "0.1.0"
