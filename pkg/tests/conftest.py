from pathlib import Path

import numpy as np
import pytest

from iosw.calibration import build_initial_state
from iosw.dynamics import apply_shock
from iosw.ingest import SyntheticSpec, generate_synthetic, read_table
from iosw.iotable import IOTable

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"

# filled by test_acceptance, reported at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def chain():
    return read_table(FIXTURES / "chain3.csv")


@pytest.fixture
def toy():
    return read_table(FIXTURES / "toy4.csv")


def random_economy(seed: int, n: int, shock_scale: float = 0.3):
    """Synthetic table, its shocked initial state, operators and the shock.

    Shocks stay within ``shock_scale`` of each sector's final demand so
    ``f0 + g0`` remains positive.
    """
    rng = np.random.default_rng(seed)
    table = generate_synthetic(SyntheticSpec(n, density=0.6, seed=seed))
    g0 = table.f * rng.uniform(-shock_scale, shock_scale, n)
    initial, ops = build_initial_state(table)
    return table, apply_shock(initial, g0), ops, g0


def chain_table(weights, f, country="CH", year=2000) -> IOTable:
    """Linear supply chain 1 -> 2 -> ... -> n with ``A[i, i+1] = weights[i]``."""
    n = len(f)
    A = np.zeros((n, n))
    A[np.arange(n - 1), np.arange(1, n)] = weights
    x = np.linalg.solve(np.eye(n) - A, f)
    Z = A * x[np.newaxis, :]
    return IOTable(
        tuple(f"C{k + 1}" for k in range(n)), country, year, Z,
        x - Z.sum(axis=1), x - Z.sum(axis=0), x,
    )
