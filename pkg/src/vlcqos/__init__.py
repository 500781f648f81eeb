"""QoS analysis of fixed-rate VLC downlinks under delay constraints."""
__version__ = "0.1.0"
