"""Amplified amplitude estimation on a dense statevector simulator.

Submodules: ``statevector`` (simulator), ``oracles`` (query-counted oracles,
walks, block encodings), ``estimation`` (AE, AAE and projector sums),
``fermion`` (one-body operators, paths, ground states), ``quadrature``
(Newton-Cotes energy differences), ``experiments`` and ``cli``.
"""

__version__ = "0.1.0"
