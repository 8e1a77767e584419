"""Distribution-shift metrics, a dropout MLP, and the van der Waals gas experiments."""

__version__ = "0.1.0"
