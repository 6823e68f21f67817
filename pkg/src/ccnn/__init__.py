"""Multisampling and checkered subsampling for 2-D convolutional networks."""
__version__ = "0.1.0"
