"""Multi-cell RIS-assisted MIMO-OFDM optimization under I/Q imbalance."""

__version__ = "0.1.0"
