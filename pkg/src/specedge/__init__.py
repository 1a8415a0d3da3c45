"""Top-of-spectrum statistics for lattice Schrodinger operators H = Delta + xi.

The package simulates finite-volume Anderson Hamiltonians whose i.i.d.
potential has a doubly-exponential upper tail, solves the constrained
eigenvalue problem behind the field-to-eigenvalue gap, runs deterministic
checkers for the truncation/decay/coupling inequalities, and tests the
Poisson / Gumbel limit laws of the leading eigenvalues by Monte Carlo.
"""

__version__ = "0.1.0"
