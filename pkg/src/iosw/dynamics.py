"""
Simultaneous quantity and price adjustment after a final-demand shock.

State variables are quantities ``q``, value added ``v`` and the residual
monetary shock ``g``; prices are derived as ``p = P @ v``. Per sector,

    dq/dt = delta_q * g / p
    dv/dt = delta_p * g
    dg/dt = -(G @ dq/dt) * p - (G @ q) * (P @ dv/dt)

so ``g + (G @ q) * (P @ v)`` is conserved and the shock is absorbed when
``g`` reaches zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernel
from .errors import AdmissibilityError, ContractError, DivergenceError, StructuralError
from .leontief import Operators


@dataclass(frozen=True, eq=False)
class DynamicState:
    t: float
    q: np.ndarray
    v: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        for name in ("q", "v", "g"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.q.shape == self.v.shape == self.g.shape and self.q.ndim == 1):
            raise StructuralError("q, v and g must be vectors of equal length")

    def prices(self, ops: Operators) -> np.ndarray:
        return ops.P @ self.v

    def output(self, ops: Operators) -> np.ndarray:
        return self.q * self.prices(ops)

    def invariant(self, ops: Operators) -> np.ndarray:
        """The conserved quantity ``g + (G q) * (P v)``."""
        return self.g + (ops.G @ self.q) * (ops.P @ self.v)


@dataclass(frozen=True, eq=False)
class BehavioralParams:
    """Per-sector adjustment speeds for quantities and value added."""

    delta_q: np.ndarray
    delta_p: np.ndarray

    def __post_init__(self):
        dq = np.array(self.delta_q, dtype=float).reshape(-1)
        dp = np.array(self.delta_p, dtype=float).reshape(-1)
        if dq.shape != dp.shape:
            raise StructuralError("delta_q and delta_p differ in length")
        if (dq < 0).any() or (dp < 0).any():
            raise ValueError("adjustment speeds must be nonnegative")
        if ((dq + dp) <= 0).any():
            k = int(np.argmax((dq + dp) <= 0))
            raise ValueError(f"sector {k} has both adjustment speeds zero")
        dq.setflags(write=False)
        dp.setflags(write=False)
        object.__setattr__(self, "delta_q", dq)
        object.__setattr__(self, "delta_p", dp)

    @classmethod
    def uniform(cls, n: int, delta_q: float, delta_p: float) -> "BehavioralParams":
        return cls(np.full(n, float(delta_q)), np.full(n, float(delta_p)))

    def scaled(self, c: float) -> "BehavioralParams":
        return BehavioralParams(self.delta_q * c, self.delta_p * c)


# regimes (i)-(iii) of the toy economy
PRESETS = {
    "quantity": (1.0, 0.0),
    "mixed": (1.0, 1.0),
    "price": (0.0, 1.0),
}


@dataclass(frozen=True)
class IntegratorOptions:
    h: float = 1e-2
    t_max: float = 1e4
    eps: float = 1e-8
    sample_every: int = 100
    max_halvings: int = 20
    record: bool = True

    def __post_init__(self):
        if not (self.h > 0 and self.t_max > 0 and self.eps > 0):
            raise ValueError("h, t_max and eps must be positive")
        if self.sample_every < 1:
            raise ValueError("sample_every must be at least 1")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States sampled along an integration; ``p`` is derived from ``v``."""

    t: np.ndarray
    q: np.ndarray
    v: np.ndarray
    g: np.ndarray
    p: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.q * self.p

    def __len__(self) -> int:
        return len(self.t)


@dataclass(frozen=True, eq=False)
class IntegrationResult:
    trajectory: Trajectory
    final: DynamicState
    converged: bool
    steps: int
    g0_norm: float = field(default=0.0)


def rhs(state: DynamicState, params: BehavioralParams, ops: Operators):
    """Time derivatives ``(dq, dv, dg)`` at ``state``."""
    p = ops.P @ state.v
    bad = np.flatnonzero(~(p > 0))
    if bad.size:
        raise AdmissibilityError(f"nonpositive price in sector {bad[0]}", int(bad[0]))
    dq = params.delta_q * state.g / p
    dv = params.delta_p * state.g
    dg = -(ops.G @ dq) * p - (ops.G @ state.q) * (ops.P @ dv)
    return dq, dv, dg


def apply_shock(state: DynamicState, g0, atol: float = 0.0) -> DynamicState:
    """Place a monetary demand shock on an equilibrium state."""
    if np.abs(state.g).max(initial=0.0) > atol:
        raise ContractError("shock applied to a state that is not at equilibrium")
    g0 = np.asarray(g0, dtype=float)
    if g0.shape != state.g.shape:
        raise StructuralError(f"shock of shape {g0.shape} for {state.g.shape[0]} sectors")
    return replace(state, g=g0)


def integrate(
    initial: DynamicState,
    params: BehavioralParams,
    ops: Operators,
    opts: IntegratorOptions = IntegratorOptions(),
) -> IntegrationResult:
    """Fixed-step RK4 until ``|g|_inf <= eps * max(1, |g0|_inf)`` or ``t_max``.

    A step that would produce a nonpositive quantity or price is retried
    with half the step size, up to ``opts.max_halvings`` times, after which
    :class:`DivergenceError` is raised. Hitting ``t_max`` is reported via
    ``converged=False``.
    """
    n = initial.q.shape[0]
    if params.delta_q.shape != (n,) or ops.n != n:
        raise StructuralError("state, params and operators disagree on sector count")
    p0 = ops.P @ initial.v
    if (initial.q <= 0).any() or (p0 <= 0).any():
        k = int(np.argmax((initial.q <= 0) | (p0 <= 0)))
        raise AdmissibilityError("initial state is not admissible", k)

    q = initial.q.copy()
    v = initial.v.copy()
    g = initial.g.copy()
    dq = np.ascontiguousarray(params.delta_q)
    dp = np.ascontiguousarray(params.delta_p)
    G = np.ascontiguousarray(ops.G)
    P = np.ascontiguousarray(ops.P)
    g0_norm = float(np.abs(g).max(initial=0.0))
    tol = opts.eps * max(1.0, g0_norm)
    chunk = opts.sample_every if opts.record else np.iinfo(np.int64).max

    samples = [(initial.t, q.copy(), v.copy(), g.copy())]
    t = float(initial.t)
    t_max = float(initial.t) + opts.t_max
    steps = 0
    while True:
        t, k, status, sector = _kernel.advance(
            q, v, g, dq, dp, G, P, opts.h, t, t_max, tol, chunk, opts.max_halvings
        )
        steps += k
        if status == _kernel.DIVERGED:
            raise DivergenceError(
                f"admissibility lost in sector {sector} at t={t:.6g} after "
                f"{opts.max_halvings} step halvings",
                int(sector),
                t,
            )
        if opts.record and k > 0:
            samples.append((t, q.copy(), v.copy(), g.copy()))
        if status != _kernel.RUNNING:
            break

    ts = np.array([s[0] for s in samples])
    Q, V, Gm = (np.array([s[i] for s in samples]) for i in (1, 2, 3))
    traj = Trajectory(t=ts, q=Q, v=V, g=Gm, p=V @ ops.P.T)
    final = DynamicState(t=t, q=q, v=v, g=g)
    return IntegrationResult(traj, final, status == _kernel.CONVERGED, steps, g0_norm)


def _num(a) -> str:
    return repr(float(a))


def write_trajectory_csv(
    path,
    traj: Trajectory,
    labels,
    warmup: float = 0.0,
    warmup_samples: int = 0,
) -> None:
    """Long-format export with columns ``t, sector, q, p, v, g, x``.

    With ``warmup > 0`` the pre-shock equilibrium is prepended (``g = 0``) and
    all times are shifted so the shock lands at ``t = warmup``.
    """
    rows = []
    if warmup > 0:
        for tw in np.linspace(0.0, warmup, max(warmup_samples, 2), endpoint=False):
            rows.append((tw, traj.q[0], traj.v[0], np.zeros_like(traj.g[0]), traj.p[0]))
    for k in range(len(traj)):
        rows.append((traj.t[k] + warmup, traj.q[k], traj.v[k], traj.g[k], traj.p[k]))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "sector", "q", "p", "v", "g", "x"])
        for t, q, v, g, p in rows:
            for i, label in enumerate(labels):
                w.writerow([_num(t), label, _num(q[i]), _num(p[i]), _num(v[i]),
                            _num(g[i]), _num(q[i] * p[i])])
