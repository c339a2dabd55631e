import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hstm.laplace import (B_MIN, SYMBOL_MAX, TOTAL, LaplaceParams, build_cdf_rows,
                          build_cdf_table, clamp_to_support, estimate_bits,
                          laplace_cdf, laplace_pmf, support_halfwidth)


class TestPmf:
    def test_symbol_zero_unit_scale(self):
        assert laplace_pmf(0, 1.0) == pytest.approx(1 - np.exp(-0.5), abs=1e-9)
        assert laplace_pmf(0, 1.0) == pytest.approx(0.393469, abs=1e-6)

    def test_symbol_one_unit_scale(self):
        expected = 0.5 * (np.exp(-0.5) - np.exp(-1.5))
        assert laplace_pmf(1, 1.0) == pytest.approx(expected, abs=1e-12)
        assert laplace_pmf(1, 1.0) == pytest.approx(0.191700, abs=1e-6)

    @given(st.integers(-40, 40), st.floats(0.02, 50.0))
    def test_symmetry(self, k, b):
        assert laplace_pmf(k, b) == pytest.approx(laplace_pmf(-k, b), rel=1e-12)

    def test_nonpositive_scale_rejected(self):
        with pytest.raises(ValueError):
            laplace_pmf(0, 0.0)
        with pytest.raises(ValueError):
            laplace_pmf(0, -1.0)

    def test_pmf_of_zero_decreases_in_b(self):
        bs = np.logspace(-2, 6, 30, base=2)
        vals = [laplace_pmf(0, b) for b in bs]
        assert all(x > y for x, y in zip(vals, vals[1:]))

    def test_cdf_limits(self):
        assert laplace_cdf(-200.0, 1.0) == pytest.approx(0.0, abs=1e-12)
        assert laplace_cdf(200.0, 1.0) == pytest.approx(1.0, abs=1e-12)
        assert laplace_cdf(0.0, 3.0) == pytest.approx(0.5)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            LaplaceParams(mu=np.zeros(2), b=np.array([1.0, -1.0]))
        with pytest.raises(ValueError):
            LaplaceParams(mu=np.array([np.nan]), b=np.array([1.0]))


class TestTables:
    def test_valid_over_log_grid(self):
        for b in np.logspace(np.log10(B_MIN), np.log10(64.0), 40):
            table = build_cdf_table(float(b))  # validates in __post_init__
            assert table.cumulative[-1] == TOTAL
            diffs = np.diff(table.cumulative)
            assert diffs.min() >= 1

    def test_count_matches_closed_form(self):
        table = build_cdf_table(1.0)
        zero_idx = -table.symbol_min
        count0 = table.cumulative[zero_idx + 1] - table.cumulative[zero_idx]
        assert abs(count0 / TOTAL - 0.393469) < 2 ** -14

    def test_determinism(self):
        a = build_cdf_table(0.73)
        b = build_cdf_table(0.73)
        np.testing.assert_array_equal(a.cumulative, b.cumulative)

    def test_rows_match_single_tables(self):
        bs = np.array([0.05, 1.0, 7.5])
        rows = build_cdf_rows(bs)
        for i, b in enumerate(bs):
            t = build_cdf_table(float(b))
            lo = rows.offset + t.symbol_min
            got = rows.cum[i, lo:lo + len(t.cumulative)]
            np.testing.assert_array_equal(got, t.cumulative)

    def test_support_halfwidth_bounds(self):
        h = support_halfwidth(np.array([1e-3, 0.5, 100.0]))
        assert h[0] == 3
        assert h[1] == 8
        assert h[-1] == SYMBOL_MAX
        assert np.all(h >= 2) and np.all(h <= SYMBOL_MAX)

    def test_clamp_to_support(self):
        rows = build_cdf_rows(np.array([0.05, 0.05]))
        out = clamp_to_support(np.array([50, -50]), rows)
        h = rows.halfwidth
        np.testing.assert_array_equal(out, [h[0], -h[1]])


class TestEstimateBits:
    def test_single_symbol_closed_form(self):
        assert estimate_bits([0], [1.0]) == pytest.approx(-np.log2(1 - np.exp(-0.5)), abs=1e-9)
        assert estimate_bits([0], [1.0]) == pytest.approx(1.3457, abs=1e-4)

    def test_additivity(self):
        syms = [0, 1, -2]
        bs = [1.0, 0.5, 2.0]
        total = estimate_bits(syms, bs)
        parts = sum(estimate_bits([s], [b]) for s, b in zip(syms, bs))
        assert total == pytest.approx(parts, rel=1e-12)

    def test_increasing_in_b_for_symbol_zero(self):
        bs = np.logspace(-1, 4, 20, base=2)
        bits = [estimate_bits([0], [b]) for b in bs]
        assert all(x < y for x, y in zip(bits, bits[1:]))

    def test_small_scale_near_free(self):
        # nearly deterministic distribution: coding a zero costs ~nothing
        assert estimate_bits([0], [B_MIN]) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.floats(0.02, 60.0))
def test_table_mass_tracks_pmf(b):
    table = build_cdf_table(b)
    sym = min(1, table.symbol_max)
    idx = sym - table.symbol_min
    count = table.cumulative[idx + 1] - table.cumulative[idx]
    assert count / TOTAL == pytest.approx(laplace_pmf(sym, max(b, B_MIN)), abs=2e-3)
