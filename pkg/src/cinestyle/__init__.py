"""Cinematographic style transfer: extract framing and depth-of-field style
from measured footage and reproduce it with a predictive camera controller."""

__version__ = "0.1.0"
