"""Remote state preparation: protocols, randomizing sets and trade-off curves."""
__version__ = "0.1.0"
