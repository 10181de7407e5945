"""NLI estimation for ultra-wideband links with ISRS and Raman amplification."""

__version__ = "0.1.0"
