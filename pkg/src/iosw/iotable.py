"""
Balanced national input-output tables.

An :class:`IOTable` holds one country-year snapshot in monetary units::

    x[k] = sum_i Z[i, k] + v[k]      (inflows)
         = sum_j Z[k, j] + f[k]      (outflows)

Tables are immutable once built; every operation here is a pure function.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateSectorError,
    HawkinsSimonError,
    InfeasibleStateError,
    StructuralError,
    UnknownCountryError,
)
from .leontief import is_productive

logger = logging.getLogger(__name__)

CANONICAL_TOL = 1e-8
SOURCE_TOL = 1e-6


def _frozen(a, ndim):
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise StructuralError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class IOTable:
    """One balanced national IO snapshot.

    ``Z[i, j]`` is the flow from sector i to sector j. Balance is not enforced
    at construction (use :func:`validate_balance` or :meth:`check`), so that
    unbalanced data can still be inspected and reported on.
    """

    sector_labels: tuple
    country: str
    year: int
    Z: np.ndarray
    f: np.ndarray
    v: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sector_labels", tuple(str(s) for s in self.sector_labels))
        object.__setattr__(self, "year", int(self.year))
        object.__setattr__(self, "Z", _frozen(self.Z, 2))
        for name in ("f", "v", "x"):
            object.__setattr__(self, name, _frozen(getattr(self, name), 1))

    @property
    def n(self) -> int:
        return len(self.sector_labels)

    def check(self, rel_tol: float = CANONICAL_TOL) -> "IOTable":
        """Raise unless every table invariant holds; returns self for chaining."""
        report = validate_balance(self, rel_tol)
        if not report.passed:
            raise StructuralError(report.describe())
        if (self.Z < 0).any():
            i, j = np.argwhere(self.Z < 0)[0]
            raise StructuralError(
                f"negative flow Z[{self.sector_labels[i]}, {self.sector_labels[j]}]"
            )
        if (self.x <= 0).any():
            k = int(np.argmax(self.x <= 0))
            raise DegenerateSectorError(
                f"sector {self.sector_labels[k]} has nonpositive output", sector=k
            )
        return self

    def same_as(self, other: "IOTable", rtol: float = 0.0, atol: float = 0.0) -> bool:
        if (self.sector_labels, self.country, self.year) != (
            other.sector_labels,
            other.country,
            other.year,
        ):
            return False
        return all(
            np.allclose(getattr(self, k), getattr(other, k), rtol=rtol, atol=atol)
            for k in ("Z", "f", "v", "x")
        )


@dataclass(frozen=True, eq=False)
class WorldTable:
    """Multi-country table; rows/columns are ordered country-major.

    Index ``c * n + s`` addresses sector ``s`` of country ``c``.
    ``final_demand[:, d]`` is final use by destination country ``d``.
    """

    countries: tuple
    sector_labels: tuple
    flows: np.ndarray
    final_demand: np.ndarray
    value_added: np.ndarray
    final_use_categories: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "countries", tuple(str(c) for c in self.countries))
        object.__setattr__(self, "sector_labels", tuple(str(s) for s in self.sector_labels))
        object.__setattr__(self, "flows", _frozen(self.flows, 2))
        object.__setattr__(self, "final_demand", _frozen(self.final_demand, 2))
        object.__setattr__(self, "value_added", _frozen(self.value_added, 1))
        N = len(self.countries) * len(self.sector_labels)
        m = len(self.countries)
        if (
            self.flows.shape != (N, N)
            or self.final_demand.shape != (N, m)
            or self.value_added.shape != (N,)
        ):
            raise StructuralError(
                f"world table with {m} countries x {len(self.sector_labels)} sectors "
                f"got flows {self.flows.shape}, final_demand {self.final_demand.shape}, "
                f"value_added {self.value_added.shape}"
            )

    @property
    def output(self) -> np.ndarray:
        return self.flows.sum(axis=1) + self.final_demand.sum(axis=1)

    def balance_residual(self) -> float:
        """Largest relative gap between row-side and column-side output."""
        x_row = self.output
        x_col = self.flows.sum(axis=0) + self.value_added
        scale = np.maximum(np.abs(x_row), np.abs(x_col))
        gap = np.abs(x_row - x_col)
        rel = np.divide(gap, scale, out=gap.copy(), where=scale > 0)
        return float(rel.max(initial=0.0))


@dataclass(frozen=True)
class BalanceReport:
    row_residuals: np.ndarray
    col_residuals: np.ndarray
    rel_tol: float
    sector_labels: tuple = field(default=())

    @property
    def max_row(self) -> float:
        return float(self.row_residuals.max(initial=0.0))

    @property
    def max_col(self) -> float:
        return float(self.col_residuals.max(initial=0.0))

    @property
    def passed(self) -> bool:
        return self.max_row <= self.rel_tol and self.max_col <= self.rel_tol

    def worst_sector(self) -> str:
        worst = np.maximum(self.row_residuals, self.col_residuals)
        k = int(np.argmax(worst))
        return self.sector_labels[k] if self.sector_labels else str(k)

    def describe(self) -> str:
        status = "pass" if self.passed else "FAIL"
        msg = (
            f"balance {status}: max row residual {self.max_row:.3e}, "
            f"max column residual {self.max_col:.3e} (tol {self.rel_tol:.1e})"
        )
        if not self.passed:
            msg += f"; worst sector {self.worst_sector()}"
        return msg


def _relative(gap, x):
    gap = np.abs(gap)
    scale = np.abs(x)
    return np.divide(gap, scale, out=gap.copy(), where=scale > 0)


def validate_balance(table: IOTable, rel_tol: float = CANONICAL_TOL) -> BalanceReport:
    """Per-sector relative row and column residuals of the accounting identity."""
    if rel_tol < 0:
        raise ValueError("rel_tol must be nonnegative")
    n = table.n
    if table.Z.shape != (n, n) or any(a.shape != (n,) for a in (table.f, table.v, table.x)):
        raise StructuralError(
            f"{n} labels but Z {table.Z.shape}, f {table.f.shape}, "
            f"v {table.v.shape}, x {table.x.shape}"
        )
    row = _relative(table.Z.sum(axis=1) + table.f - table.x, table.x)
    col = _relative(table.Z.sum(axis=0) + table.v - table.x, table.x)
    return BalanceReport(row, col, rel_tol, table.sector_labels)


def technical_coefficients(table: IOTable) -> np.ndarray:
    """``A[i, j] = Z[i, j] / x[j]``.

    A column summing to more than one (negative value added) is rejected;
    a sum of exactly one (zero value added) is allowed if ``I - A`` still
    passes the leading-minor test.
    """
    x = table.x
    if (x <= 0).any():
        k = int(np.argmax(x <= 0))
        raise DegenerateSectorError(
            f"sector {table.sector_labels[k]} has zero output; drop it first", sector=k
        )
    A = table.Z / x[np.newaxis, :]
    colsum = A.sum(axis=0)
    over = colsum > 1 + CANONICAL_TOL
    if over.any():
        k = int(np.argmax(over))
        raise HawkinsSimonError(
            f"column sum of A for sector {table.sector_labels[k]} is {colsum[k]:.6g} > 1"
        )
    if (colsum >= 1).any() and not is_productive(A):
        raise HawkinsSimonError("I - A has a nonpositive leading principal minor")
    return A


def restrict_sectors(table: IOTable, keep: Sequence[str]) -> IOTable:
    """Keep only ``keep`` (in the given order) while preserving balance.

    Deliveries to dropped sectors are booked as final demand, purchases from
    dropped sectors as value added, the same closure used for cross-border flows.
    """
    index = {s: k for k, s in enumerate(table.sector_labels)}
    try:
        idx = np.array([index[s] for s in keep], dtype=int)
    except KeyError as exc:
        raise StructuralError(f"unknown sector {exc.args[0]!r}") from None
    out = np.ones(table.n, dtype=bool)
    out[idx] = False
    Z = table.Z[np.ix_(idx, idx)]
    f = table.f[idx] + table.Z[np.ix_(idx, np.flatnonzero(out))].sum(axis=1)
    v = table.v[idx] + table.Z[np.ix_(np.flatnonzero(out), idx)].sum(axis=0)
    return IOTable(tuple(keep), table.country, table.year, Z, f, v, table.x[idx])


def drop_zero_output(table: IOTable) -> tuple[IOTable, list[int]]:
    """Remove sectors with ``x == 0``; returns the new table and kept indices."""
    kept = [k for k in range(table.n) if table.x[k] > 0]
    if len(kept) == table.n:
        return table, kept
    dropped = [table.sector_labels[k] for k in range(table.n) if k not in kept]
    logger.info(
        "%s %d: dropping zero-output sectors %s", table.country, table.year, ", ".join(dropped)
    )
    return restrict_sectors(table, [table.sector_labels[k] for k in kept]), kept


def national_from_world(world: WorldTable, country: str, year: int = 0) -> IOTable:
    """Close one country's block of a world table into a national table.

    Exports (intermediate and final) are added to final demand; imported
    intermediate inputs are added to value added. Zero-output sectors are
    dropped.
    """
    try:
        c = world.countries.index(country)
    except ValueError:
        raise UnknownCountryError(f"country {country!r} not in world table") from None
    n = len(world.sector_labels)
    dom = np.arange(c * n, (c + 1) * n)
    foreign = np.setdiff1d(np.arange(world.flows.shape[0]), dom)

    Z = world.flows[np.ix_(dom, dom)]
    f = world.final_demand[dom].sum(axis=1) + world.flows[np.ix_(dom, foreign)].sum(axis=1)
    v = world.value_added[dom] + world.flows[np.ix_(foreign, dom)].sum(axis=0)
    x = Z.sum(axis=1) + f
    table = IOTable(world.sector_labels, country, year, Z, f, v, x)
    table, _ = drop_zero_output(table)
    return table


def adjusted_accounts(A, q, p):
    """``(Z, f, v, x)`` of the table implied by quantities ``q`` and prices ``p``."""
    A = np.asarray(A, dtype=float)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    Z = A * np.outer(p, q)
    x = q * p
    f = p * (q - A @ q)
    v = x - Z.sum(axis=0)
    return Z, f, v, x


def rebuild_table(A, q, p, labels, country, year, slack=0.0) -> IOTable:
    """IO table implied by quantities ``q`` and prices ``p`` under fixed ``A``.

    Raises :class:`InfeasibleStateError` if final demand or value added turn
    negative, i.e. the state lies outside the admissible region. Entries in
    ``[-slack, 0)`` are taken as integration remainder and set to zero; pass the
    convergence bound on ``|g|`` when rebuilding from an equilibrated state.
    """
    if (np.asarray(q) <= 0).any() or (np.asarray(p) <= 0).any():
        raise InfeasibleStateError("quantities and prices must be positive")
    Z, f, v, x = adjusted_accounts(A, q, p)
    f = np.where((f < 0) & (f >= -slack), 0.0, f)
    v = np.where((v < 0) & (v >= -slack), 0.0, v)
    bad = np.flatnonzero((f < 0) | (v < 0))
    if bad.size:
        names = [str(labels[k]) for k in bad]
        raise InfeasibleStateError(
            f"negative final demand or value added in sectors {', '.join(names)}", names
        )
    return IOTable(tuple(labels), country, year, Z, f, v, x)
