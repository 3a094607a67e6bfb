"""
ncsvm - Nonconvex penalized linear SVMs solved by ADMM

Trains sparse linear classifiers under LSP, SCAD, MCP and capped-l1 penalties
with a cached-factorization ADMM solver, and ships a CLI for training,
prediction and benchmark reproduction on LIBSVM datasets.
"""

__version__ = "0.1.0"
__all__ = ["__version__"]
