"""Energy-space modeling and control of a power source feeding a load."""

__version__ = "0.1.0"
