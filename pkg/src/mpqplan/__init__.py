"""Mixed-precision quantization planning toolkit."""

__version__ = "0.1.0"
