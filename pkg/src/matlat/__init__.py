"""Verification and simulation toolkit for conservative 2x2 matrix field
equations on periodic lattices.

Subpackage map:

- ``algebra``: exact Mat(2,C) operations (Pauli basis, projectors, the four
  conjugations, Lie-group membership, N-matrix construction).
- ``fields``: lattice geometry, matrix-valued fields, finite differences,
  covariant derivatives, field strength, band-limited random fields.
- ``systems``: residual evaluators for all equation systems, currents, and
  the closure formulas tying lambda1/lambda2/alpha to epsilon.
- ``gauge``: gauge transformations and quantitative covariance checks.
- ``identities``: numerical verification of the derived identities in
  residual-corrected form, with convergence-order estimation.
- ``evolve``: temporal-gauge time evolution (RK4) with constraint and charge
  diagnostics, plus manufactured-solution convergence studies.
- ``cli``: the ``matlat`` command-line entry point.
"""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
