"""Globally optimal rigid registration with multiresolution correlation bounds."""

__version__ = "0.1.0"
