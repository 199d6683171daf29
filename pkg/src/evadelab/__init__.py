"""Feature-space evasion attacks against static malware detectors."""

__version__ = "0.1.0"
