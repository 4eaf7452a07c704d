"""Shadow robo-investor ("alter ego") backtesting laboratory."""

__version__ = "0.1.0"
