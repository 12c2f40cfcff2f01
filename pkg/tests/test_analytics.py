import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iosw.analytics import (
    PanelCube,
    aggregate_ensemble,
    correlation_matrix,
    project,
    stratify,
    tidy_frame,
)
from iosw.calibration import FitResult
from iosw.dynamics import BehavioralParams
from iosw.errors import EmptySliceError, UndefinedDirectionError

positive = st.floats(1e-6, 1e6, allow_nan=False)


def run(dq, dp, residual=0.0, seed=0):
    return FitResult(BehavioralParams(dq, dp), residual, True, 1, seed)


def brute_corr(a, b):
    """Two-pass textbook Pearson correlation over pairwise-complete entries."""
    keep = ~(np.isnan(a) | np.isnan(b))
    a, b = a[keep], b[keep]
    ma = sum(a) / len(a)
    mb = sum(b) / len(b)
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    den = np.sqrt(sum((x - ma) ** 2 for x in a) * sum((y - mb) ** 2 for y in b))
    return num / den


class TestProject:
    def test_examples(self):
        p = project([1.0, 3.0, 0.0], [1.0, 0.0, 2.0])
        np.testing.assert_allclose(p.delta_q_tilde, [0.5, 1.0, 0.0])
        np.testing.assert_allclose(p.delta_p_tilde, [0.5, 0.0, 1.0])

    @pytest.mark.parametrize("c", [0.1, 10.0])
    def test_scale(self, c):
        dq, dp = np.array([0.3, 2.0]), np.array([1.5, 0.01])
        np.testing.assert_allclose(
            project(c * dq, c * dp).delta_q_tilde, project(dq, dp).delta_q_tilde, rtol=0, atol=1e-15
        )

    @settings(max_examples=500)
    @given(positive, positive, st.floats(1e-6, 1e6))
    def test_sum_and_scale_invariance(self, dq, dp, c):
        p = project([dq], [dp])
        assert 0.0 <= p.delta_q_tilde[0] <= 1.0
        assert abs(p.delta_q_tilde[0] + p.delta_p_tilde[0] - 1) <= 1e-12
        assert abs(project([c * dq], [c * dp]).delta_q_tilde[0] - p.delta_q_tilde[0]) <= 1e-12

    def test_undefined(self):
        with pytest.raises(UndefinedDirectionError):
            project([1.0, 0.0], [1.0, 0.0])

    def test_negative(self):
        with pytest.raises(ValueError):
            project([-1.0], [1.0])


class TestAggregate:
    def test_single_run(self):
        s = aggregate_ensemble([run([1.0, 2.0], [3.0, 2.0], 0.1)], ["a", "b"])
        expected = project([1.0, 2.0], [3.0, 2.0]).delta_q_tilde
        np.testing.assert_array_equal(s.median, expected)
        np.testing.assert_array_equal(s.q75 - s.q25, 0)
        assert s.n_runs == 1 and s.best_residual == 0.1

    def test_symmetric_runs(self):
        # angles symmetric about 45 degrees
        runs = [run([np.tan(a)], [1.0]) for a in np.pi / 4 + np.array([-0.3, -0.1, 0.1, 0.3])]
        assert aggregate_ensemble(runs).median[0] == pytest.approx(0.5)

    def test_quartiles(self):
        runs = [run([np.tan(t * np.pi / 2)], [1.0]) for t in (0.1, 0.2, 0.3, 0.4, 0.5)]
        s = aggregate_ensemble(runs)
        assert (s.q25[0], s.median[0], s.q75[0]) == pytest.approx((0.2, 0.3, 0.4))
        assert (s.minimum[0], s.maximum[0]) == pytest.approx((0.1, 0.5))
        assert list(s.to_frame().columns) == ["sector", "median", "q25", "q75", "min", "max"]

    def test_empty(self):
        with pytest.raises(EmptySliceError):
            aggregate_ensemble([])


def cube_222():
    cube = PanelCube()
    values = {
        ("A", "s1", 2000): 0.1, ("A", "s1", 2001): 0.3,
        ("A", "s2", 2000): 0.5, ("A", "s2", 2001): 0.7,
        ("B", "s1", 2000): 0.2, ("B", "s1", 2001): 0.4,
        ("B", "s2", 2000): 0.9, ("B", "s2", 2001): 0.6,
    }
    for (c, s, y), v in values.items():
        cube.add(c, s, y, v)
    return cube


class TestStratify:
    def test_one_cell(self):
        cube = PanelCube()
        cube.add("A", "s", 2000, 0.4)
        m = stratify(cube, "sector", "year")
        assert m.shape == (1, 1) and m.iloc[0, 0] == 0.4

    @pytest.mark.parametrize("reduce", ["mean", "median"])
    def test_constant(self, reduce):
        cube = PanelCube()
        for c in "AB":
            for s in ("s1", "s2", "s3"):
                for y in (1, 2):
                    cube.add(c, s, y, 0.25)
        m = stratify(cube, "country", "sector", reduce=reduce)
        assert (m.to_numpy() == 0.25).all()

    def test_hand_computed_means(self):
        cube = cube_222()
        m = stratify(cube, "sector", "country")
        assert m.loc["s1", "A"] == pytest.approx(0.2)
        assert m.loc["s2", "B"] == pytest.approx(0.75)
        m = stratify(cube, "country", "year")
        assert m.loc["A", 2000] == pytest.approx(0.3)
        assert m.loc["B", 2001] == pytest.approx(0.5)
        m = stratify(cube, "sector", "year", where={"country": ["B"]})
        assert m.loc["s2", 2000] == pytest.approx(0.9)

    def test_missing_stays_missing(self):
        cube = cube_222()
        cube.add("C", "s1", 2000, 0.5)
        m = stratify(cube, "sector", "country")
        assert np.isnan(m.loc["s2", "C"])
        assert m.loc["s1", "C"] == 0.5

    def test_errors(self):
        cube = cube_222()
        with pytest.raises(KeyError):
            stratify(cube, "sector", "sector")
        with pytest.raises(EmptySliceError):
            stratify(cube, "sector", "year", where={"country": ["Z"]})
        with pytest.raises(ValueError):
            stratify(cube, "sector", "year", reduce="max")

    def test_range_checked(self):
        with pytest.raises(ValueError):
            PanelCube().add("A", "s", 1, 1.5)


class TestCorrelation:
    def test_identical_and_negated(self):
        m = pd.DataFrame([[0.1, 0.5, 0.3], [0.1, 0.5, 0.3], [0.9, 0.5, 0.7]], index=["a", "b", "c"])
        c = correlation_matrix(m)
        assert c.loc["a", "b"] == pytest.approx(1.0)
        assert c.loc["a", "c"] == pytest.approx(-1.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        data = rng.uniform(size=(5, 10))
        c = correlation_matrix(pd.DataFrame(data))
        for i in range(5):
            for j in range(5):
                assert c.iloc[i, j] == pytest.approx(brute_corr(data[i], data[j]), abs=1e-12)
        assert (np.diag(c) == 1.0).all()
        np.testing.assert_array_equal(c.to_numpy(), c.to_numpy().T)
        assert np.linalg.eigvalsh(c.to_numpy()).min() > -1e-12

    def test_columns(self):
        rng = np.random.default_rng(1)
        df = pd.DataFrame(rng.uniform(size=(6, 3)), columns=["x", "y", "z"])
        c = correlation_matrix(df, along="cols")
        assert list(c.index) == ["x", "y", "z"]
        assert c.loc["x", "z"] == pytest.approx(brute_corr(df["x"].to_numpy(), df["z"].to_numpy()), abs=1e-12)

    def test_pairwise_missing(self):
        a = np.array([0.1, 0.4, np.nan, 0.8, 0.3])
        b = np.array([0.2, np.nan, 0.5, 0.9, 0.1])
        c = correlation_matrix(pd.DataFrame([a, b], index=["a", "b"]))
        assert c.loc["a", "b"] == pytest.approx(brute_corr(a, b), abs=1e-12)

    def test_constant_series_is_missing(self):
        m = pd.DataFrame([[0.5, 0.5, 0.5], [0.1, 0.2, 0.4]], index=["flat", "x"])
        c = correlation_matrix(m)
        assert np.isnan(c.loc["flat", "x"]) and np.isnan(c.loc["flat", "flat"])
        assert c.loc["x", "x"] == 1.0

    def test_too_few_pairs(self):
        m = pd.DataFrame([[0.1, np.nan, 0.3], [np.nan, 0.2, 0.4]], index=["a", "b"])
        assert np.isnan(correlation_matrix(m).loc["a", "b"])


def test_tidy_frame():
    cube = PanelCube()
    cube.add_summary("A", 2000, aggregate_ensemble([run([1.0], [1.0]), run([3.0], [1.0])], ["s"]))
    cube.add("B", "s", 2000, 0.2)
    df = tidy_frame(cube)
    assert list(df.columns) == ["country", "sector", "year", "delta_q_tilde_median", "iqr_low", "iqr_high"]
    assert df.loc[0, "iqr_low"] <= df.loc[0, "delta_q_tilde_median"] <= df.loc[0, "iqr_high"]
    assert np.isnan(df.loc[1, "iqr_low"])
