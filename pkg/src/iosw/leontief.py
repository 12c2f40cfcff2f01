"""Static Leontief machinery: the operators G and P and the classical oracles."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import HawkinsSimonError, InconsistentInputsError, StructuralError

PRICE_CHECK_TOL = 1e-6


def leading_minor_pivots(M: np.ndarray) -> np.ndarray:
    """Pivots of Gaussian elimination without row exchanges.

    The k-th leading principal minor of ``M`` equals the product of the first
    k pivots, so all minors are positive iff all pivots are.
    """
    U = np.array(M, dtype=float)
    n = U.shape[0]
    pivots = np.empty(n)
    for k in range(n):
        pivots[k] = U[k, k]
        if pivots[k] <= 0:
            pivots[k + 1 :] = np.nan
            return pivots
        U[k + 1 :, k:] -= np.outer(U[k + 1 :, k] / U[k, k], U[k, k:])
    return pivots


def is_productive(A: np.ndarray) -> bool:
    """Hawkins-Simon condition on a nonnegative coefficient matrix."""
    A = np.asarray(A, dtype=float)
    if (A.sum(axis=0) < 1).all():
        return True
    pivots = leading_minor_pivots(np.eye(A.shape[0]) - A)
    return bool(np.all(pivots > 0))


@dataclass(frozen=True, eq=False)
class Operators:
    """``G = I - A`` and the price operator ``P = (I - A^T)^{-1} diag(x0)^{-1}``.

    ``P @ v`` gives prices in units where base-year prices are one. The
    Leontief inverse ``L`` is materialised lazily and is only needed for
    oracle checks; the dynamics use ``G`` and ``P`` directly.
    """

    A: np.ndarray
    G: np.ndarray
    P: np.ndarray
    x0: np.ndarray
    price_residual: float

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @cached_property
    def L(self) -> np.ndarray:
        L = np.linalg.solve(self.G, np.eye(self.n))
        L.setflags(write=False)
        return L

    def prices(self, v) -> np.ndarray:
        return self.P @ np.asarray(v, dtype=float)


def build_operators(A, x0, v0) -> Operators:
    A = np.array(A, dtype=float)
    x0 = np.array(x0, dtype=float)
    v0 = np.array(v0, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or x0.shape != (n,) or v0.shape != (n,):
        raise StructuralError(f"A {A.shape}, x0 {x0.shape}, v0 {v0.shape} disagree")
    if (A < 0).any():
        raise HawkinsSimonError("technical coefficients must be nonnegative")
    if not is_productive(A):
        raise HawkinsSimonError("I - A has a nonpositive leading principal minor")
    if (x0 <= 0).any():
        raise InconsistentInputsError("base-year output must be positive")

    G = np.eye(n) - A
    # (I - A^T) P = diag(1/x0), solved rather than inverted
    P = np.linalg.solve(G.T, np.diag(1.0 / x0))
    resid = float(np.abs(P @ v0 - 1.0).max(initial=0.0))
    if resid > PRICE_CHECK_TOL:
        raise InconsistentInputsError(
            f"base prices P @ v0 deviate from one by {resid:.3e}; "
            "v0 does not satisfy column balance with A and x0"
        )
    for arr in (A, G, P, x0):
        arr.setflags(write=False)
    return Operators(A=A, G=G, P=P, x0=x0, price_residual=resid)


def quantity_model(ops: Operators, delta_f) -> np.ndarray:
    """Fixed-price response of gross output to a final-demand change."""
    return np.linalg.solve(ops.G, np.asarray(delta_f, dtype=float))


def price_model(ops: Operators, v) -> np.ndarray:
    """Fixed-quantity price vector for value added ``v``."""
    return ops.prices(v)
