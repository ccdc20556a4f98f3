"""Joint BS beamforming and IRS phase design for multi-target sensing."""

__version__ = "0.1.0"
