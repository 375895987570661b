"""crowddet: recurrent set-prediction box detection on synthetic scenes."""

__version__ = "0.1.0"
