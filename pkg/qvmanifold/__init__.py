"""Quadratic-variation PCA of semimartingales and invariant manifold estimation for space-time panels"""

__version__ = '0.1.0'
