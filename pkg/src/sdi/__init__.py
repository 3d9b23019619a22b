"""Software-only spoofing detection for gyroscope and magnetometer streams."""

__version__ = "0.1.0"
