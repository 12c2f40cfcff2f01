"""
Estimating per-sector adjustment speeds from two consecutive IO tables.

The base-year table fixes the technical coefficients and the initial state
(quantities = output, prices = 1); the change in final demand between the
years is the shock; the converged model table is compared with the
target-year table through

    R = ||x_y2 - x_model||_2 + ||v_y2 - v_model||_2

and R is minimised by Adam on log-parameters with central finite-difference
gradients. Runs are repeated from random starts and the best kept.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import (
    BehavioralParams,
    DynamicState,
    IntegratorOptions,
    apply_shock,
    integrate,
)
from .errors import DivergenceError, EnsembleError, FitAborted, ReconciliationError, StructuralError
from .iotable import (
    IOTable,
    drop_zero_output,
    rebuild_table,
    restrict_sectors,
    technical_coefficients,
)
from .leontief import Operators, build_operators

logger = logging.getLogger(__name__)

INIT_RANGE = (1e-3, 1e1)


@dataclass(frozen=True)
class OptimizerOptions:
    """Adam settings plus the integrator used inside the objective.

    ``step_size`` applies to log-parameters. With ``free_magnitudes=False``
    only the per-sector log-ratio is optimised (each sector's
    ``hypot(delta_q, delta_p)`` stays at its starting value) and the step is
    ``+step`` on ``log delta_q`` with ``-step`` on ``log delta_p``.
    """

    step_size: float = 0.05
    max_iter: int = 500
    rel_improvement: float = 1e-6
    patience: int = 10
    fd_step: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    free_magnitudes: bool = False
    max_backtracks: int = 10
    max_probe_halvings: int = 5
    plateau_halvings: int = 3
    integrator: IntegratorOptions = field(
        default_factory=lambda: IntegratorOptions(h=0.1, t_max=1e4, eps=1e-8, record=False)
    )

    def __post_init__(self):
        if self.step_size <= 0 or self.fd_step <= 0 or self.max_iter < 0:
            raise ValueError("step_size and fd_step must be positive, max_iter nonnegative")


@dataclass(frozen=True, eq=False)
class FitProblem:
    table_y1: IOTable
    table_y2: IOTable
    ops: Operators
    g0: np.ndarray
    initial: DynamicState

    @property
    def n(self) -> int:
        return self.table_y1.n

    @property
    def labels(self) -> tuple:
        return self.table_y1.sector_labels


@dataclass(frozen=True, eq=False)
class FitResult:
    params: BehavioralParams
    residual: float
    converged: bool
    iterations: int
    seed: int
    history: tuple = ()


@dataclass(frozen=True)
class RunFailure:
    seed: int
    message: str


def build_initial_state(table: IOTable) -> tuple[DynamicState, Operators]:
    """Equilibrium state of the base year: ``q = x``, ``v`` as observed, ``g = 0``."""
    A = technical_coefficients(table)
    ops = build_operators(A, table.x, table.v)
    state = DynamicState(t=0.0, q=table.x, v=table.v, g=np.zeros(table.n))
    return state, ops


def make_problem(table_y1: IOTable, table_y2: IOTable, check_years: bool = True) -> FitProblem:
    """Pair two tables, keeping sectors with positive output in both years."""
    if table_y1.country != table_y2.country:
        raise ReconciliationError(
            f"tables belong to different countries ({table_y1.country}, {table_y2.country})"
        )
    if check_years and table_y2.year != table_y1.year + 1:
        raise ReconciliationError(
            f"years {table_y1.year} and {table_y2.year} are not consecutive"
        )
    t1, _ = drop_zero_output(table_y1)
    t2, _ = drop_zero_output(table_y2)
    common = [s for s in t1.sector_labels if s in set(t2.sector_labels)]
    if not common:
        raise ReconciliationError("no sector has positive output in both years")
    if len(common) < max(t1.n, t2.n):
        logger.info("reconciled to %d common sectors", len(common))
    t1 = restrict_sectors(t1, common)
    t2 = restrict_sectors(t2, common)
    initial, ops = build_initial_state(t1)
    g0 = t2.f - t1.f
    return FitProblem(t1, t2, ops, g0, apply_shock(initial, g0))


def model_accounts(final: DynamicState, ops: Operators) -> tuple[np.ndarray, np.ndarray]:
    """Model output ``q * (P v)`` and the value-added state ``v``.

    ``v`` is the state variable, not the column residual of the rebuilt
    table: the latter is unchanged by ``(q, p) -> (c q, p / c)`` and would
    leave one direction of the parameters unidentified.
    """
    return final.q * (ops.P @ final.v), np.array(final.v)


def residual(final: DynamicState, table_y2: IOTable, ops: Operators) -> float:
    if final.q.shape != table_y2.x.shape:
        raise StructuralError("state and target table disagree on sector count")
    x_hat, v_hat = model_accounts(final, ops)
    return float(np.linalg.norm(table_y2.x - x_hat) + np.linalg.norm(table_y2.v - v_hat))


def equilibrate(
    initial: DynamicState,
    params: BehavioralParams,
    ops: Operators,
    opts: IntegratorOptions,
):
    """Run to the post-shock equilibrium in rescaled time.

    Joint scaling of all speeds only rescales time, so speeds are divided by
    their maximum first; ``opts.h`` and ``opts.t_max`` are in those units.
    """
    scale = max(params.delta_q.max(), params.delta_p.max())
    result = integrate(initial, params.scaled(1.0 / scale), ops, replace(opts, record=False))
    return result.final, result.converged


def simulate_year2(
    table_y1: IOTable,
    g0,
    params: BehavioralParams,
    opts: IntegratorOptions | None = None,
) -> IOTable:
    """Target-year table the model produces from ``table_y1`` under ``params``.

    Flows, final demand and output come from the converged state; the ``v``
    column holds the value-added state, so the residual at ``params`` is zero.
    The column identity then holds only up to the volume change ``q - x0``;
    use :func:`iosw.iotable.rebuild_table` for a fully balanced table.
    """
    opts = opts or OptimizerOptions().integrator
    initial, ops = build_initial_state(table_y1)
    final, converged = equilibrate(apply_shock(initial, g0), params, ops, opts)
    if not converged:
        raise FitAborted("model did not converge while generating the target table")
    balanced = rebuild_table(
        ops.A, final.q, ops.P @ final.v, table_y1.sector_labels, table_y1.country,
        table_y1.year + 1, slack=opts.eps * max(1.0, np.abs(g0).max()),
    )
    return replace(balanced, v=final.v)


class _Objective:
    def __init__(self, problem: FitProblem, opts: IntegratorOptions):
        self.problem = problem
        self.opts = opts
        self.evaluations = 0

    def __call__(self, params: BehavioralParams) -> tuple[float, bool]:
        self.evaluations += 1
        p = self.problem
        final, converged = equilibrate(p.initial, params, p.ops, self.opts)
        return residual(final, p.table_y2, p.ops), converged


class _LogParams:
    """delta = exp(theta) over all 2n components."""

    def __init__(self, init: BehavioralParams):
        self.n = init.delta_q.shape[0]

    def encode(self, params):
        d = np.concatenate([params.delta_q, params.delta_p])
        return np.log(np.maximum(d, 1e-300)).clip(-30.0, 30.0)

    def decode(self, z):
        d = np.exp(np.clip(z, -30.0, 30.0))
        return BehavioralParams(d[: self.n], d[self.n :])


class _LogRatio:
    """Half log-ratio per sector with the per-sector norm held fixed.

    ``w = (log delta_q - log delta_p) / 2``; a step ``dw`` moves both
    log-parameters by ``+-dw``, then the pair is put back on its circle.
    """

    def __init__(self, init: BehavioralParams):
        self.rho = np.hypot(init.delta_q, init.delta_p)

    def encode(self, params):
        phi = np.arctan2(params.delta_q, params.delta_p).clip(1e-12, np.pi / 2 - 1e-12)
        return 0.5 * np.log(np.tan(phi))

    def decode(self, w):
        w = np.clip(w, -30.0, 30.0)
        phi = np.arctan2(np.exp(w), np.exp(-w))
        return BehavioralParams(self.rho * np.sin(phi), self.rho * np.cos(phi))


def _fd_gradient(objective, coords, z, h0, max_halvings):
    grad = np.empty_like(z)
    for i in range(z.size):
        h = h0
        for _ in range(max_halvings + 1):
            e = np.zeros_like(z)
            e[i] = h
            try:
                r_plus, _ = objective(coords.decode(z + e))
                r_minus, _ = objective(coords.decode(z - e))
            except DivergenceError:
                h *= 0.5
                continue
            grad[i] = (r_plus - r_minus) / (2 * h)
            break
        else:
            raise FitAborted(f"gradient probes diverge along coordinate {i}")
    return grad


def fit(
    problem: FitProblem,
    init: BehavioralParams,
    opts: OptimizerOptions = OptimizerOptions(),
    seed: int = 0,
) -> FitResult:
    """Minimise R from ``init``; returns the best parameters seen.

    When the best residual improves by less than ``rel_improvement``
    (relative) over ``patience`` iterations, Adam restarts from the best
    point with half the step size; the fit stops at the next such plateau
    once the step has been halved ``plateau_halvings`` times, or after
    ``max_iter`` iterations.
    """
    if init.delta_q.shape != (problem.n,):
        raise StructuralError("initial parameters do not match the problem size")
    objective = _Objective(problem, opts.integrator)
    coords = _LogParams(init) if opts.free_magnitudes else _LogRatio(init)

    try:
        best_r, best_conv = objective(init)
    except DivergenceError as exc:
        raise FitAborted(f"dynamics diverge at the initial parameters: {exc}") from exc
    best = init
    history = [best_r]
    z = coords.encode(init)
    m = np.zeros_like(z)
    s = np.zeros_like(z)
    lr = opts.step_size
    halvings = 0
    mark = 0
    it = 0
    while it < opts.max_iter and best_r > 0:
        it += 1
        grad = _fd_gradient(objective, coords, z, opts.fd_step, opts.max_probe_halvings)
        m = opts.beta1 * m + (1 - opts.beta1) * grad
        s = opts.beta2 * s + (1 - opts.beta2) * grad**2
        k = it - mark
        m_hat = m / (1 - opts.beta1**k)
        s_hat = s / (1 - opts.beta2**k)
        step = lr * m_hat / (np.sqrt(s_hat) + opts.adam_eps)
        for _ in range(opts.max_backtracks + 1):
            candidate = coords.decode(z - step)
            try:
                r, conv = objective(candidate)
            except DivergenceError:
                step = 0.5 * step
                continue
            break
        else:
            raise FitAborted("dynamics keep diverging along the descent direction")
        z = z - step
        if r < best_r:
            best, best_r, best_conv = candidate, r, conv
        history.append(best_r)
        if it - mark >= opts.patience:
            past = history[-1 - opts.patience]
            if past - best_r <= opts.rel_improvement * past:
                if halvings == opts.plateau_halvings:
                    break
                # plateau: resume from the best point with a smaller step
                halvings += 1
                lr *= 0.5
                mark = it
                z = coords.encode(best)
                m = np.zeros_like(z)
                s = np.zeros_like(z)
    return FitResult(best, best_r, best_conv, it, seed, tuple(history))


def draw_initial(n: int, rng: np.random.Generator, free_magnitudes: bool = False) -> BehavioralParams:
    """Both speeds log-uniform on ``INIT_RANGE``.

    Unless magnitudes are free, each sector's pair is rescaled to unit norm;
    the drawn ratio is kept.
    """
    lo, hi = np.log(INIT_RANGE[0]), np.log(INIT_RANGE[1])
    d = np.exp(rng.uniform(lo, hi, size=(2, n)))
    if not free_magnitudes:
        d = d / np.hypot(d[0], d[1])
    return BehavioralParams(d[0], d[1])


def _run_one(args):
    problem, run_seed, opts = args
    rng = np.random.default_rng(run_seed)
    init = draw_initial(problem.n, rng, opts.free_magnitudes)
    try:
        return fit(problem, init, opts, seed=run_seed)
    except FitAborted as exc:
        return RunFailure(run_seed, str(exc))


def run_restarts(
    problem: FitProblem,
    n_runs: int,
    seed: int = 0,
    opts: OptimizerOptions = OptimizerOptions(),
    workers: int = 1,
) -> list:
    """All ``n_runs`` outcomes (:class:`FitResult` or :class:`RunFailure`), in run order.

    Run ``k`` uses seed ``seed + k``, so results do not depend on ``workers``.
    """
    jobs = [(problem, seed + k, opts) for k in range(n_runs)]
    if workers > 1 and n_runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(job) for job in jobs]


def select_best(outcomes: Sequence, n_keep: int) -> list[FitResult]:
    ok = [o for o in outcomes if isinstance(o, FitResult)]
    if not ok:
        failures = [o for o in outcomes if isinstance(o, RunFailure)]
        raise EnsembleError(
            f"all {len(failures)} runs aborted", [f"seed {f.seed}: {f.message}" for f in failures]
        )
    ok.sort(key=lambda r: (r.residual, r.seed))
    return ok[:n_keep]


def multi_restart(
    problem: FitProblem,
    n_runs: int = 100,
    n_keep: int = 25,
    seed: int = 0,
    opts: OptimizerOptions = OptimizerOptions(),
    workers: int = 1,
) -> list[FitResult]:
    """Fit from ``n_runs`` random starts and keep the ``n_keep`` lowest residuals."""
    if not 1 <= n_keep <= n_runs:
        raise ValueError("need 1 <= n_keep <= n_runs")
    outcomes = run_restarts(problem, n_runs, seed, opts, workers)
    failed = sum(isinstance(o, RunFailure) for o in outcomes)
    if failed:
        logger.warning("%d of %d runs aborted", failed, n_runs)
    return select_best(outcomes, n_keep)


ENSEMBLE_COLUMNS = ("seed", "sector", "delta_q", "delta_p", "residual", "converged")


def write_ensemble_csv(path, results: Sequence[FitResult], labels, country: str, y1: int, y2: int):
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# country={country} y1={y1} y2={y2}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ENSEMBLE_COLUMNS)
        for r in results:
            for i, label in enumerate(labels):
                w.writerow([
                    r.seed, label, repr(float(r.params.delta_q[i])),
                    repr(float(r.params.delta_p[i])), repr(float(r.residual)), int(r.converged),
                ])


@dataclass(frozen=True)
class EnsembleFile:
    country: str
    y1: int
    y2: int
    labels: tuple
    results: list


def read_ensemble_csv(path) -> EnsembleFile:
    """Read an ensemble written by :func:`write_ensemble_csv`."""
    with Path(path).open(newline="") as fh:
        head = fh.readline().strip()
        meta = dict(item.split("=", 1) for item in head.lstrip("#").split())
        rows = list(csv.DictReader(fh))
    if not rows:
        raise StructuralError(f"{path}: ensemble file has no rows")
    if tuple(rows[0].keys()) != ENSEMBLE_COLUMNS:
        raise StructuralError(f"{path}: columns must be {','.join(ENSEMBLE_COLUMNS)}")
    labels = list(dict.fromkeys(r["sector"] for r in rows))
    by_seed: dict[int, list] = {}
    for r in rows:
        by_seed.setdefault(int(r["seed"]), []).append(r)
    results = []
    for s, rs in by_seed.items():
        order = [labels.index(r["sector"]) for r in rs]
        dq = np.empty(len(labels))
        dp = np.empty(len(labels))
        dq[order] = [float(r["delta_q"]) for r in rs]
        dp[order] = [float(r["delta_p"]) for r in rs]
        results.append(
            FitResult(BehavioralParams(dq, dp), float(rs[0]["residual"]),
                      bool(int(rs[0]["converged"])), 0, s)
        )
    return EnsembleFile(meta["country"], int(meta["y1"]), int(meta["y2"]), tuple(labels), results)
