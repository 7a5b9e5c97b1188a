"""mctl - distributed multi-sensor motion-capture fusion."""

__version__ = "0.1.0"
