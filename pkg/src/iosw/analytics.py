"""
Post-fit analysis: projection of speed pairs onto [0, 1], ensemble summaries,
country/sector/year panels and correlation matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import EmptySliceError, UndefinedDirectionError

AXES = ("country", "sector", "year")


@dataclass(frozen=True, eq=False)
class ProjectedParams:
    delta_q_tilde: np.ndarray
    delta_p_tilde: np.ndarray


def project(delta_q, delta_p) -> ProjectedParams:
    """``(2/pi) * arctan(delta_q / delta_p)`` and its complement, elementwise.

    A zero ``delta_p`` maps to 1 (pure quantity adjustment).
    """
    dq = np.asarray(delta_q, dtype=float)
    dp = np.asarray(delta_p, dtype=float)
    if (dq < 0).any() or (dp < 0).any():
        raise ValueError("adjustment speeds must be nonnegative")
    both_zero = (dq == 0) & (dp == 0)
    if both_zero.any():
        raise UndefinedDirectionError(
            f"sector {int(np.argmax(both_zero))} has both speeds zero"
        )
    # arctan2 handles the delta_p = 0 limit without dividing
    return ProjectedParams(
        2.0 / np.pi * np.arctan2(dq, dp),
        2.0 / np.pi * np.arctan2(dp, dq),
    )


@dataclass(frozen=True, eq=False)
class EnsembleSummary:
    """Per-sector distribution of the projected quantity share over runs."""

    sector_labels: tuple
    median: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray
    n_runs: int
    best_residual: float
    median_residual: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "sector": self.sector_labels,
                "median": self.median,
                "q25": self.q25,
                "q75": self.q75,
                "min": self.minimum,
                "max": self.maximum,
            }
        )


def aggregate_ensemble(results: Sequence, labels: Sequence[str] | None = None) -> EnsembleSummary:
    if len(results) == 0:
        raise EmptySliceError("cannot summarise an empty ensemble")
    tq = np.array([project(r.params.delta_q, r.params.delta_p).delta_q_tilde for r in results])
    res = np.array([r.residual for r in results])
    n = tq.shape[1]
    labels = tuple(labels) if labels is not None else tuple(str(k) for k in range(n))
    q25, med, q75 = np.percentile(tq, [25, 50, 75], axis=0)
    return EnsembleSummary(
        labels, med, q25, q75, tq.min(axis=0), tq.max(axis=0), len(results),
        float(res.min()), float(np.median(res)),
    )


@dataclass
class PanelCube:
    """Sparse ``(country, sector, year) -> value`` store with per-cell provenance."""

    values: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def add(self, country, sector, year, value, **prov):
        value = float(value)
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"cell value {value} outside [0, 1]")
        key = (str(country), str(sector), int(year))
        self.values[key] = value
        self.provenance[key] = prov

    def add_summary(self, country, year, summary: EnsembleSummary):
        for k, sector in enumerate(summary.sector_labels):
            self.add(
                country, sector, year, summary.median[k],
                iqr_low=float(summary.q25[k]), iqr_high=float(summary.q75[k]),
                n_runs=summary.n_runs, best_residual=summary.best_residual,
            )

    def __len__(self):
        return len(self.values)

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"country": c, "sector": s, "year": y, "value": v, **self.provenance.get((c, s, y), {})}
            for (c, s, y), v in self.values.items()
        ]
        return pd.DataFrame(rows, columns=None if rows else [*AXES, "value"])


def stratify(
    cube: PanelCube,
    rows: str,
    cols: str,
    reduce: str = "mean",
    where: dict | None = None,
) -> pd.DataFrame:
    """Labelled ``rows x cols`` matrix, reducing over the remaining axis.

    Cells with no observations stay NaN. ``where`` filters axis values before
    reducing, e.g. ``{"year": [2008, 2009]}``.
    """
    if rows not in AXES or cols not in AXES or rows == cols:
        raise KeyError(f"rows and cols must be two distinct axes out of {AXES}")
    if reduce not in ("mean", "median"):
        raise ValueError("reduce must be 'mean' or 'median'")
    df = cube.to_frame()
    for axis, allowed in (where or {}).items():
        if axis not in AXES:
            raise KeyError(f"unknown axis {axis!r}")
        df = df[df[axis].isin(list(allowed))]
    if df.empty:
        raise EmptySliceError("no cells left after filtering")
    out = df.pivot_table(index=rows, columns=cols, values="value", aggfunc=reduce, dropna=False)
    out.columns.name = cols
    return out.astype(float)


def correlation_matrix(matrix: pd.DataFrame, along: str = "rows") -> pd.DataFrame:
    """Pearson correlation between the rows (or columns) of ``matrix``.

    Pairs use only observations present in both series; pairs with fewer
    than two such observations, or a constant series, are NaN. The diagonal
    is exactly 1 wherever a series has nonzero variance.
    """
    if along not in ("rows", "cols"):
        raise ValueError("along must be 'rows' or 'cols'")
    data = matrix.T if along == "rows" else matrix
    corr = data.astype(float).corr(method="pearson", min_periods=2)
    values = corr.to_numpy(copy=True)
    defined = np.array([data[c].dropna().nunique() > 1 for c in data.columns])
    np.fill_diagonal(values, np.where(defined, 1.0, np.nan))
    values = np.clip(values, -1.0, 1.0)
    values = np.triu(values) + np.triu(values, 1).T
    return pd.DataFrame(values, index=corr.index, columns=corr.columns)


def tidy_frame(cube: PanelCube) -> pd.DataFrame:
    """Rows ``country, sector, year, delta_q_tilde_median, iqr_low, iqr_high``."""
    df = cube.to_frame()
    out = df.rename(columns={"value": "delta_q_tilde_median"})
    for col in ("iqr_low", "iqr_high"):
        if col not in out:
            out[col] = np.nan
    cols = ["country", "sector", "year", "delta_q_tilde_median", "iqr_low", "iqr_high"]
    return out[cols].sort_values(["country", "sector", "year"]).reset_index(drop=True)
