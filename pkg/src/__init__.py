"""
LQG Identification Toolkit
Equilibria of linear-quadratic-Gaussian games on an agent continuum and
identification of their information structures from observed actions.
"""

__version__ = "1.0.0"
