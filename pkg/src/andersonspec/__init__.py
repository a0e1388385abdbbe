"""Exponent spectra of block tridiagonal Hamiltonians with generalized boundary conditions.

Modules: :mod:`blockmodel` (matrices and determinants), :mod:`transfer`
(transfer matrices and exponents), :mod:`duality` (determinant identities and
doubled matrices), :mod:`spectral` (Jensen counting curves), :mod:`anderson`
(Anderson and Hatano-Nelson models) and :mod:`cli`.
"""

__version__ = "0.1.0"
