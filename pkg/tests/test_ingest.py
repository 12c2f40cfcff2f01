import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iosw.errors import ParseError
from iosw.ingest import (
    SyntheticSpec,
    generate_synthetic,
    parse_canonical_csv,
    parse_world_long,
    to_canonical_csv,
    to_world_long,
)
from iosw.iotable import WorldTable, national_from_world, technical_coefficients, validate_balance
from iosw.leontief import is_productive

from conftest import FIXTURES

CHAIN_TEXT = (FIXTURES / "chain3.csv").read_text()


def edit(text, line, old, new):
    lines = text.splitlines()
    assert old in lines[line - 1]
    lines[line - 1] = lines[line - 1].replace(old, new, 1)
    return "\n".join(lines) + "\n"


class TestCanonical:
    def test_chain(self, chain):
        assert chain.sector_labels == ("i", "j", "k")
        assert (chain.country, chain.year) == ("CHAIN", 2000)
        np.testing.assert_array_equal(chain.x, [4, 7, 7])

    def test_round_trip_chain(self, chain):
        again = parse_canonical_csv(to_canonical_csv(chain).encode())
        assert again.same_as(chain)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 9), st.floats(0.0, 1.0))
    def test_round_trip_bit_exact(self, seed, n, density):
        t = generate_synthetic(SyntheticSpec(n, density=density, seed=seed))
        again = parse_canonical_csv(to_canonical_csv(t))
        assert again.same_as(t)
        assert again.sector_labels == t.sector_labels

    def test_flipped_sign_names_sector(self):
        bad = edit(CHAIN_TEXT, 4, "j,0,0,5", "j,0,0,-5")
        with pytest.raises(ParseError) as info:
            parse_canonical_csv(bad)
        err = info.value
        assert err.kind == "balance" and err.sector == "j" and err.line == 4
        assert "sector j" in str(err)

    def test_negative_flow_when_balanced(self):
        text = "# country=X year=1 n=2\nsector,a,b,f,x\na,0,-1,3,2\nb,0,0,2,2\nv,2,3,,\n"
        with pytest.raises(ParseError) as info:
            parse_canonical_csv(text)
        assert info.value.kind == "negative" and (info.value.line, info.value.column) == (3, 3)

    @pytest.mark.parametrize(
        "text, kind, line",
        [
            ("", "header", 1),
            ("country=X year=1 n=3\n", "header", 1),
            (CHAIN_TEXT.replace("n=3", "n=4"), "dimension", None),
            (edit(CHAIN_TEXT, 2, "sector", "sectors"), "header", 2),
            (edit(CHAIN_TEXT, 2, ",f,x", ",x,f"), "header", 2),
            (edit(CHAIN_TEXT, 3, "i,0,4,0,0,4", "i,0,4,0,0"), "dimension", 3),
            (edit(CHAIN_TEXT, 4, "j,", "q,"), "dimension", 4),
            (edit(CHAIN_TEXT, 6, "v,", "w,"), "dimension", 6),
            (edit(CHAIN_TEXT, 6, "2,,", "2,1,"), "dimension", 6),
        ],
    )
    def test_structural_diagnostics(self, text, kind, line):
        with pytest.raises(ParseError) as info:
            parse_canonical_csv(text)
        assert info.value.kind == kind
        if line is not None:
            assert info.value.line == line

    @pytest.mark.parametrize("cell", ['"1,000"', "nan", "inf", "abc", "", "0x10", "1e"])
    def test_non_numeric(self, cell):
        bad = edit(CHAIN_TEXT, 5, "k,0,0,0,7,7", f"k,0,0,{cell},7,7")
        with pytest.raises(ParseError) as info:
            parse_canonical_csv(bad)
        assert info.value.kind == "non-numeric"
        assert (info.value.line, info.value.column) == (5, 4)

    def test_zero_output(self):
        text = "# country=X year=1 n=2\nsector,a,b,f,x\na,0,0,1,1\nb,0,0,0,0\nv,1,0,,\n"
        with pytest.raises(ParseError) as info:
            parse_canonical_csv(text)
        assert info.value.kind == "degenerate"

    def test_tolerance(self, chain):
        noisy = edit(CHAIN_TEXT, 5, "7,7", "7.000001,7")
        assert parse_canonical_csv(noisy).f[2] == 7.000001
        with pytest.raises(ParseError):
            parse_canonical_csv(noisy, rel_tol=1e-8)


def world_text(rows):
    return "origin_country,origin_sector,dest_country,dest_sector_or_final_use,value\n" + "".join(
        ",".join(map(str, r)) + "\n" for r in rows
    )


def flat_rows(table, country):
    rows = []
    for i, si in enumerate(table.sector_labels):
        for j, sj in enumerate(table.sector_labels):
            rows.append((country, si, country, sj, table.Z[i, j]))
        rows.append((country, si, country, "HH", table.f[i]))
    for j, sj in enumerate(table.sector_labels):
        rows.append(("VA", "VA", country, sj, table.v[j]))
    return rows


class TestWorldLong:
    def test_single_country(self, toy):
        w = parse_world_long(world_text(flat_rows(toy, "TOY")))
        assert w.countries == ("TOY",) and w.final_use_categories == ("HH",)
        assert national_from_world(w, "TOY", 2000).same_as(toy)

    def test_cross_border_export(self):
        rows = [
            ("A", "s", "A", "s", 1), ("A", "s", "B", "s", 2), ("A", "s", "A", "HH", 3),
            ("B", "s", "B", "s", 0), ("B", "s", "A", "s", 0), ("B", "s", "B", "GOV", 4),
            ("VA", "VA", "A", "s", 5), ("VA", "VA", "B", "s", 2),
        ]
        w = parse_world_long(world_text(rows))
        assert set(w.final_use_categories) == {"HH", "GOV"}
        a = national_from_world(w, "A")
        assert a.f[0] == 3 + 2 and a.x[0] == 6
        b = national_from_world(w, "B")
        # imported input from A is booked as value added in B
        assert b.v[0] == 2 + 2 and b.x[0] == 4

    def test_final_use_categories_summed(self):
        rows = [("A", "s", "A", "HH", 1), ("A", "s", "A", "GFCF", 2), ("VA", "VA", "A", "s", 3)]
        w = parse_world_long(world_text(rows))
        assert w.final_demand[0, 0] == 3

    def test_empty(self):
        with pytest.raises(ParseError) as info:
            parse_world_long(b"")
        assert info.value.kind == "structure"
        with pytest.raises(ParseError) as info:
            parse_world_long(world_text([]))
        assert info.value.kind == "structure"

    def test_duplicate(self):
        rows = [("A", "s", "A", "HH", 1), ("VA", "VA", "A", "s", 1), ("A", "s", "A", "HH", 1)]
        with pytest.raises(ParseError) as info:
            parse_world_long(world_text(rows))
        assert info.value.kind == "duplicate" and info.value.line == 4
        assert "A,s,A,HH" in str(info.value)

    def test_inconsistent_sectors(self):
        rows = [
            ("A", "s", "A", "HH", 1), ("A", "t", "A", "HH", 1), ("B", "s", "B", "HH", 1),
            ("VA", "VA", "A", "s", 1), ("VA", "VA", "A", "t", 1), ("VA", "VA", "B", "s", 1),
        ]
        with pytest.raises(ParseError) as info:
            parse_world_long(world_text(rows))
        assert info.value.kind == "sectors" and "lacks sectors t" in str(info.value)

    def test_unbalanced(self):
        rows = [("A", "s", "A", "HH", 1), ("VA", "VA", "A", "s", 2)]
        with pytest.raises(ParseError) as info:
            parse_world_long(world_text(rows))
        assert info.value.kind == "balance"

    def test_bad_header(self):
        with pytest.raises(ParseError) as info:
            parse_world_long("a,b,c,d,e\n")
        assert info.value.kind == "header"

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        flows = rng.uniform(0, 1, (4, 4))
        final = rng.uniform(1, 2, (4, 2))
        x = flows.sum(axis=1) + final.sum(axis=1)
        w = WorldTable(("A", "B"), ("1", "2"), flows, final, x - flows.sum(axis=0))
        again = parse_world_long(to_world_long(w))
        np.testing.assert_array_equal(again.flows, w.flows)
        np.testing.assert_array_equal(again.final_demand, w.final_demand)
        np.testing.assert_array_equal(again.value_added, w.value_added)


class TestSynthetic:
    def test_density_zero(self):
        t = generate_synthetic(SyntheticSpec(5, density=0.0, seed=3))
        assert not t.Z.any()
        np.testing.assert_array_equal(t.x, t.f)

    def test_scalar_economy(self):
        t = generate_synthetic(SyntheticSpec(1, density=1.0, seed=0, value_added_share_range=(0.5, 0.5)))
        a = technical_coefficients(t)[0, 0]
        assert a == pytest.approx(0.5)
        assert t.x[0] == pytest.approx(t.f[0] / (1 - a))

    def test_many_seeds_balance(self):
        for seed in range(1000):
            t = generate_synthetic(SyntheticSpec(1 + seed % 8, seed=seed))
            assert validate_balance(t, 1e-10).passed
            assert is_productive(technical_coefficients(t))
            assert (t.Z >= 0).all() and (t.x > 0).all() and (t.v > 0).all()

    def test_deterministic(self):
        a = generate_synthetic(SyntheticSpec(6, seed=11))
        b = generate_synthetic(SyntheticSpec(6, seed=11))
        assert a.same_as(b)
        assert not a.same_as(generate_synthetic(SyntheticSpec(6, seed=12)))

    @pytest.mark.parametrize(
        "kw", [dict(value_added_share_range=(0.0, 0.5)), dict(value_added_share_range=(0.5, 1.0)),
               dict(density=1.5), dict(n=0)],
    )
    def test_invalid_spec(self, kw):
        args = dict(n=3) | kw
        with pytest.raises(ValueError):
            SyntheticSpec(**args)
