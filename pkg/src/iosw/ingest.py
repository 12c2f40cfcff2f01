"""
Readers and writers for IO data, plus synthetic economies for testing.

Canonical table CSV (one table per file)::

    # country=AUT year=2005 n=3
    sector,A01,B,C10,f,x
    A01,<Z row>...,<f>,<x>
    ...
    v,<v_1>,...,<v_n>,,

The grid is the N sector rows plus the ``v`` row, each N+3 cells wide,
preceded by the column-label row. Column order is fixed.

World long format (UTF-8, header required)::

    origin_country,origin_sector,dest_country,dest_sector_or_final_use,value

``dest_sector_or_final_use`` is either a sector code or a final-use category;
anything that is not a sector is summed into final demand. Rows whose
``origin_country`` is ``VA`` carry value added of the destination sector.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .iotable import SOURCE_TOL, IOTable, WorldTable, validate_balance

VA_ORIGIN = "VA"
WORLD_COLUMNS = ("origin_country", "origin_sector", "dest_country", "dest_sector_or_final_use", "value")

_HEADER_RE = re.compile(r"^#\s*country=(\S+)\s+year=(-?\d+)\s+n=(\d+)\s*$")
_NUMBER_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def _number(cell: str, line: int, column: int) -> float:
    text = cell.strip()
    if not _NUMBER_RE.match(text):
        raise ParseError(f"not a plain decimal number: {cell!r}", "non-numeric", line, column)
    return float(text)


def _text(data) -> str:
    if isinstance(data, (bytes, bytearray)):
        return data.decode("utf-8")
    return data


def parse_canonical_csv(data, rel_tol: float = SOURCE_TOL) -> IOTable:
    """Parse one canonical table. Line and column numbers in errors are 1-based."""
    lines = _text(data).splitlines()
    if not lines:
        raise ParseError("empty input", "header", 1)
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise ParseError(
            f"expected '# country=XX year=YYYY n=N', got {lines[0]!r}", "header", 1
        )
    country, year, n = m.group(1), int(m.group(2)), int(m.group(3))
    if n < 1:
        raise ParseError("n must be positive", "header", 1)

    rows = list(csv.reader(lines[1:]))
    if len(rows) != n + 2:
        raise ParseError(
            f"expected {n + 2} lines after the header (labels, {n} sectors, v), got {len(rows)}",
            "dimension",
            len(lines),
        )
    width = n + 3
    for k, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(
                f"expected {width} cells, got {len(row)}", "dimension", k + 2, len(row)
            )

    head = rows[0]
    labels = tuple(c.strip() for c in head[1 : n + 1])
    if head[0].strip() != "sector" or head[n + 1].strip() != "f" or head[n + 2].strip() != "x":
        raise ParseError(
            "column labels must read 'sector', <sector codes>, 'f', 'x'", "header", 2
        )
    if len(set(labels)) != n or any(not s for s in labels):
        raise ParseError("sector codes must be unique and nonempty", "header", 2)

    Z = np.empty((n, n))
    f = np.empty(n)
    x = np.empty(n)
    for i in range(n):
        row = rows[i + 1]
        line = i + 3
        if row[0].strip() != labels[i]:
            raise ParseError(
                f"row label {row[0]!r} does not match column order (expected {labels[i]!r})",
                "dimension",
                line,
                1,
            )
        for j in range(n):
            Z[i, j] = _number(row[j + 1], line, j + 2)
        f[i] = _number(row[n + 1], line, n + 2)
        x[i] = _number(row[n + 2], line, n + 3)

    vrow = rows[n + 1]
    line = n + 3
    if vrow[0].strip() != "v":
        raise ParseError(f"last row must be 'v', got {vrow[0]!r}", "dimension", line, 1)
    v = np.array([_number(vrow[j + 1], line, j + 2) for j in range(n)])
    if vrow[n + 1].strip() or vrow[n + 2].strip():
        raise ParseError("the v row must end with two blank cells", "dimension", line, n + 2)

    table = IOTable(labels, country, year, Z, f, v, x)
    report = validate_balance(table, rel_tol)
    if not report.passed:
        sector = report.worst_sector()
        raise ParseError(
            f"table does not balance at sector {sector}: {report.describe()}",
            "balance",
            labels.index(sector) + 3,
            sector=sector,
        )
    if (Z < 0).any():
        i, j = np.argwhere(Z < 0)[0]
        raise ParseError("negative intersectoral flow", "negative", i + 3, j + 2, labels[i])
    if (x <= 0).any():
        i = int(np.argmax(x <= 0))
        raise ParseError("nonpositive output", "degenerate", i + 3, n + 3, labels[i])
    return table


def _num(a) -> str:
    return repr(float(a))


def to_canonical_csv(table: IOTable) -> str:
    buf = io.StringIO()
    buf.write(f"# country={table.country} year={table.year} n={table.n}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sector", *table.sector_labels, "f", "x"])
    for i, label in enumerate(table.sector_labels):
        w.writerow([label, *map(_num, table.Z[i]), _num(table.f[i]), _num(table.x[i])])
    w.writerow(["v", *map(_num, table.v), "", ""])
    return buf.getvalue()


def read_table(path, rel_tol: float = SOURCE_TOL) -> IOTable:
    with open(path, "rb") as fh:
        return parse_canonical_csv(fh.read(), rel_tol)


def write_table(path, table: IOTable) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(to_canonical_csv(table))


def parse_world_long(data, rel_tol: float = SOURCE_TOL) -> WorldTable:
    """Assemble a :class:`WorldTable` from long-format rows."""
    text = _text(data)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty input", "structure", 1) from None
    if tuple(c.strip() for c in header) != WORLD_COLUMNS:
        raise ParseError(f"header must be {','.join(WORLD_COLUMNS)}", "header", 1)

    records = []
    seen = {}
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 5:
            raise ParseError(f"expected 5 cells, got {len(row)}", "dimension", line)
        oc, os_, dc, ds = (c.strip() for c in row[:4])
        key = (oc, os_, dc, ds)
        if key in seen:
            raise ParseError(
                f"duplicate cell {','.join(key)} (first seen on line {seen[key]})",
                "duplicate",
                line,
            )
        seen[key] = line
        records.append((oc, os_, dc, ds, _number(row[4], line, 5), line))
    if not records:
        raise ParseError("no data rows", "structure", 2)

    countries: list[str] = []
    sectors: list[str] = []
    by_country: dict[str, set] = {}
    for oc, os_, dc, ds, _, _ in records:
        if oc == VA_ORIGIN:
            continue
        if oc not in by_country:
            by_country[oc] = set()
            countries.append(oc)
        by_country[oc].add(os_)
        if os_ not in sectors:
            sectors.append(os_)
    for oc, os_, dc, ds, _, line in records:
        if dc not in by_country:
            raise ParseError(f"destination country {dc!r} never appears as origin", "structure", line)
    for c, secs in by_country.items():
        if secs != set(sectors):
            missing = sorted(set(sectors) - secs)
            raise ParseError(
                f"country {c} lacks sectors {', '.join(missing)}; sector sets must agree",
                "sectors",
            )

    n, m = len(sectors), len(countries)
    ci = {c: k for k, c in enumerate(countries)}
    si = {s: k for k, s in enumerate(sectors)}
    flows = np.zeros((n * m, n * m))
    final = np.zeros((n * m, m))
    va = np.zeros(n * m)
    categories: list[str] = []
    for oc, os_, dc, ds, value, line in records:
        if oc == VA_ORIGIN:
            if ds not in si:
                raise ParseError(f"value added for unknown sector {ds!r}", "structure", line)
            va[ci[dc] * n + si[ds]] += value
            continue
        r = ci[oc] * n + si[os_]
        if ds in si:
            flows[r, ci[dc] * n + si[ds]] += value
        else:
            final[r, ci[dc]] += value
            if ds not in categories:
                categories.append(ds)

    world = WorldTable(tuple(countries), tuple(sectors), flows, final, va, tuple(categories))
    resid = world.balance_residual()
    if resid > rel_tol:
        raise ParseError(f"world table out of balance (relative residual {resid:.3e})", "balance")
    return world


def to_world_long(world: WorldTable) -> str:
    """Inverse of :func:`parse_world_long`; final demand goes to category ``FD``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(WORLD_COLUMNS)
    n = len(world.sector_labels)
    cats = world.final_use_categories[:1] or ("FD",)
    for r, (oc, os_) in enumerate(
        (c, s) for c in world.countries for s in world.sector_labels
    ):
        for col, (dc, ds) in enumerate(
            (c, s) for c in world.countries for s in world.sector_labels
        ):
            w.writerow([oc, os_, dc, ds, _num(world.flows[r, col])])
        for d, dc in enumerate(world.countries):
            w.writerow([oc, os_, dc, cats[0], _num(world.final_demand[r, d])])
    for r in range(len(world.value_added)):
        w.writerow(
            [VA_ORIGIN, VA_ORIGIN, world.countries[r // n], world.sector_labels[r % n],
             _num(world.value_added[r])]
        )
    return buf.getvalue()


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    density: float = 0.5
    seed: int = 0
    value_added_share_range: tuple = (0.2, 0.6)
    final_demand_range: tuple = (1.0, 10.0)
    country: str = "SYN"
    year: int = 2000

    def __post_init__(self):
        lo, hi = self.value_added_share_range
        if not 0 < lo <= hi < 1:
            raise ValueError("value_added_share_range must lie within (0, 1)")
        if not 0 <= self.density <= 1:
            raise ValueError("density must lie in [0, 1]")
        if self.n < 1:
            raise ValueError("n must be positive")


def generate_synthetic(spec: SyntheticSpec) -> IOTable:
    """Random productive economy, deterministic per seed.

    Column j of A is scaled to sum to ``1 - share_j`` with the value-added share
    drawn from ``value_added_share_range``; outputs solve ``x = (I - A)^{-1} f``.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    links = rng.uniform(size=(n, n)) < spec.density
    weights = rng.uniform(0.1, 1.0, size=(n, n)) * links
    share = rng.uniform(*spec.value_added_share_range, size=n)
    colsum = weights.sum(axis=0)
    A = np.divide(weights, colsum, out=np.zeros_like(weights), where=colsum > 0) * (1 - share)
    f = rng.uniform(*spec.final_demand_range, size=n)
    x = np.linalg.solve(np.eye(n) - A, f)
    Z = A * x[np.newaxis, :]
    # back-fill so both identities hold to rounding
    f = x - Z.sum(axis=1)
    v = x - Z.sum(axis=0)
    labels = tuple(f"S{k + 1}" for k in range(n))
    return IOTable(labels, spec.country, spec.year, Z, f, v, x)
