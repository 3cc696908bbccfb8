"""Sasaki geometry of tangent bundles over charted Riemannian manifolds."""

__version__ = "0.1.0"
