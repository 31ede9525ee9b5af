"""Statistical emulators for first-principles simulation outputs.

Scalar GP emulation and kernel ridge regression, gradient-domain force
fields, vector-output density emulators and a variational Monte Carlo
engine with analytic references.
"""

__version__ = "0.1.0"
