# MLSG Application Package
__version__ = "0.4.0"
