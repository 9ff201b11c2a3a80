"""Two-timescale predictive resource allocation for VoD and real-time users in OFDMA downlinks."""

__version__ = "0.1.0"
