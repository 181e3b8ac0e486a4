"""raresim — rare-event estimation for stochastic hybrid systems."""
__version__ = "0.3.0"
