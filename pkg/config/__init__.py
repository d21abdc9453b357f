# Configuration package initialization
"""
Configuration package for the SPDE density lab.
Contains numerical defaults, paths and the default experiment file.
"""

from .settings import *
