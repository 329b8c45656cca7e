"""Cross-sensor LiDAR simulation, retargeting and evaluation toolkit."""

__version__ = "0.1.0"
