"""Multiple solutions of nonlinear boundary-value problems by deflated network training."""

__version__ = "0.1.0"
