"""Two-part (adaptive + fixed) fixed-rate quantized control of unstable linear plants."""

__version__ = "0.1.0"
