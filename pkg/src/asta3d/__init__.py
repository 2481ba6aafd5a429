"""Anchor-based spatio-temporal attention convolutions for point cloud sequences."""

__version__ = "0.1.0"
