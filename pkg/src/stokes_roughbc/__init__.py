"""Stokes flow with rough Dirichlet data: Mini and Hood-Taylor elements, compatible
boundary regularization, a residual estimator and bulk-marking adaptivity."""
__version__ = "0.1.0"
