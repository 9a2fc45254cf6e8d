"""
Relformer - relative camera pose regression on paired feature maps
Main package initialization
"""

__version__ = "1.0.0"
