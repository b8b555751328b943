"""Signed ``.real`` media containers, a trust-list authority, and a stereo
2D/3D check against screen-recapture attacks."""

__version__ = "0.1.0"
