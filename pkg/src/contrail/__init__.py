"""contrail - continual learning simulator with forward/backward transfer and PAC bound calculators."""

__version__ = "0.1.0"
