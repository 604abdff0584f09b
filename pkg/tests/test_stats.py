import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpfair.stats import (
    SampleSummary,
    SingularDesignError,
    dummy_design,
    f_upper_p,
    ols_fit,
    pooled_t_test,
    summarize,
    t_test_samples,
    t_two_sided_p,
)

# published (n=10, mean, sd) summaries: accuracy in percent, then risk difference
PUBLISHED = {
    "snn": ((84.14, 0.34), (0.1310, 0.0147)),
    "dpnn": ((84.03, 0.05), (0.1355, 0.0024)),
    "fnn": ((79.25, 3.50), (0.0566, 0.0065)),
    "dpfnn": ((82.98, 0.19), (0.0475, 0.0020)),
    "LR": ((83.80, 0.23), (0.1577, 0.0064)),
    "PrivLR": ((62.63, 14.80), (0.0883, 0.0805)),
    "FairLR": ((77.39, 5.21), (0.0095, 0.0071)),
    "PFLR*": ((74.91, 0.40), (0.0028, 0.0039)),
}


def published(name, metric):
    mean, sd = PUBLISHED[name][metric]
    return SampleSummary(10, mean, sd)


def mp_t_two_sided(t, df):
    with mpmath.workdps(40):
        nu = mpmath.mpf(df)
        c = mpmath.gamma((nu + 1) / 2) / (mpmath.sqrt(nu * mpmath.pi) * mpmath.gamma(nu / 2))
        pdf = lambda x: c * (1 + x * x / nu) ** (-(nu + 1) / 2)
        return 2 * mpmath.quad(pdf, [abs(t), abs(t) + 10, mpmath.inf])


def mp_f_upper(f, d1, d2):
    with mpmath.workdps(40):
        d1, d2 = mpmath.mpf(d1), mpmath.mpf(d2)
        c = (d1 / d2) ** (d1 / 2) / mpmath.beta(d1 / 2, d2 / 2)
        pdf = lambda x: c * x ** (d1 / 2 - 1) * (1 + d1 * x / d2) ** (-(d1 + d2) / 2)
        return mpmath.quad(pdf, [f, f + 5, mpmath.inf])


class TestSummarize:
    def test_constant(self):
        assert summarize([1, 1, 1]) == SampleSummary(3, 1.0, 0.0)

    def test_two_values(self):
        s = summarize([0, 2])
        assert s.mean == 1.0 and s.sd == pytest.approx(math.sqrt(2), rel=1e-15)

    def test_permutation(self, rng):
        x = rng.normal(size=10)
        a, b = summarize(x), summarize(rng.permutation(x))
        assert a.n == b.n
        assert a.mean == pytest.approx(b.mean, rel=1e-14) and a.sd == pytest.approx(b.sd, rel=1e-14)

    def test_too_short(self):
        with pytest.raises(ValueError):
            summarize([1.0])
        with pytest.raises(ValueError):
            SampleSummary(1, 0.0, 0.0)


class TestTTest:
    def test_accuracy_example(self):
        r = pooled_t_test(published("snn", 0), published("fnn", 0))
        assert r.df == 18 and round(r.t_statistic, 1) == 4.4
        assert r.significant_at_05

    def test_rd_example(self):
        r = pooled_t_test(published("snn", 1), published("dpfnn", 1))
        assert round(r.t_statistic, 1) == 17.8

    @pytest.mark.parametrize(
        "a, b, metric, p",
        [
            ("snn", "LR", 0, 0.017),
            ("fnn", "FairLR", 0, 0.361),
            ("snn", "dpnn", 0, 0.325),
            ("dpfnn", "fnn", 0, 0.003),
        ],
    )
    def test_published_p_values(self, a, b, metric, p):
        r = pooled_t_test(published(a, metric), published(b, metric))
        assert r.p_value == pytest.approx(p, abs=0.002)

    def test_identical(self):
        s = SampleSummary(10, 84.0, 0.3)
        r = pooled_t_test(s, s)
        assert r.t_statistic == 0.0 and r.p_value == 1.0 and not r.significant_at_05

    def test_zero_variance(self):
        r = pooled_t_test(SampleSummary(3, 1.0, 0.0), SampleSummary(3, 1.0, 0.0))
        assert (r.t_statistic, r.p_value, r.infinite_t) == (0.0, 1.0, False)
        r = pooled_t_test(SampleSummary(3, 2.0, 0.0), SampleSummary(3, 1.0, 0.0))
        assert r.infinite_t and r.t_statistic == math.inf and r.p_value == 0.0

    def test_samples_hand(self):
        # means 2 and 5, both variances 1, n=3 -> t = -3 / sqrt(2/3)
        r = t_test_samples([1, 2, 3], [4, 5, 6])
        assert r.t_statistic == pytest.approx(-3 / math.sqrt(2 / 3), rel=1e-14)
        assert r.df == 4

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=15),
        st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=15),
    )
    def test_symmetry(self, x, y):
        a, b = t_test_samples(x, y), t_test_samples(y, x)
        if a.infinite_t:
            assert b.infinite_t and a.t_statistic == -b.t_statistic
        else:
            assert a.t_statistic == pytest.approx(-b.t_statistic, rel=1e-9, abs=1e-12)
            assert a.p_value == pytest.approx(b.p_value, rel=1e-9, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-100, 100), min_size=3, max_size=12, unique=True),
        st.lists(st.floats(-100, 100), min_size=3, max_size=12, unique=True),
        st.floats(0.01, 100),
    )
    def test_scale_invariance(self, x, y, c):
        a = t_test_samples(x, y)
        b = t_test_samples([c * v for v in x], [c * v for v in y])
        assert b.t_statistic == pytest.approx(a.t_statistic, rel=1e-9, abs=1e-9)


class TestTails:
    def test_t_tail_oracle(self):
        grid = [(t, df) for t in (0.0, 0.3, 1.0, 2.101, 4.4) for df in (1, 4, 9, 18, 60)]
        for t, df in grid:
            assert abs(t_two_sided_p(t, df) - float(mp_t_two_sided(t, df))) < 1e-8, (t, df)

    def test_f_tail_oracle(self):
        grid = [(f, d1, d2) for f in (0.2, 0.66, 1.5, 3.15, 9.0) for d1, d2 in ((1, 5), (3, 9), (6, 9), (2, 20), (6, 30))]
        for f, d1, d2 in grid:
            assert abs(f_upper_p(f, d1, d2) - float(mp_f_upper(f, d1, d2))) < 1e-8, (f, d1, d2)

    @pytest.mark.parametrize(
        "f, p", [(3.15, 0.0597), (2.88, 0.0748), (0.66, 0.687), (0.57, 0.748)]
    )
    def test_published_f_tests(self, f, p):
        # F is published to two decimals, so allow the induced p rounding
        assert f_upper_p(f, 6, 9) == pytest.approx(p, abs=0.005)

    def test_edges(self):
        assert t_two_sided_p(0.0, 18) == 1.0
        assert t_two_sided_p(math.inf, 18) == 0.0
        assert f_upper_p(0.0, 6, 9) == 1.0
        assert f_upper_p(math.inf, 6, 9) == 0.0


def _f_identity(res):
    return (res.r_squared / res.df_model) / ((1 - res.r_squared) / res.df_residual)


class TestOLS:
    def test_exact_fit(self, rng):
        X = np.column_stack([np.ones(8), rng.normal(size=(8, 2))])
        y = X @ np.array([1.0, -2.0, 0.5])
        res = ols_fit(X, y)
        assert res.r_squared == 1.0 and res.f_statistic == math.inf and res.p_value == 0.0
        np.testing.assert_allclose(res.residuals, 0.0, atol=1e-12)
        np.testing.assert_allclose(res.coefficients, [1.0, -2.0, 0.5], rtol=1e-12)

    def test_null_fit(self):
        X = np.column_stack([np.ones(4), [1.0, -1.0, 1.0, -1.0]])
        y = np.array([1.0, 1.0, 3.0, 3.0])
        res = ols_fit(X, y)
        assert res.r_squared == pytest.approx(0.0, abs=1e-15)
        assert res.f_statistic == pytest.approx(0.0, abs=1e-14)

    def test_against_lstsq(self, rng):
        X = np.column_stack([np.ones(30), rng.normal(size=(30, 4))])
        y = rng.normal(size=30)
        res = ols_fit(X, y)
        ref = np.linalg.lstsq(X, y, rcond=None)[0]
        np.testing.assert_allclose(res.coefficients, ref, rtol=1e-10)
        assert (res.df_model, res.df_residual) == (4, 25)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 5), st.integers(1, 20))
    def test_f_r2_identity(self, seed, k, extra):
        rng = np.random.default_rng(seed)
        n = k + 1 + extra
        X = np.column_stack([np.ones(n), rng.normal(size=(n, k))])
        res = ols_fit(X, rng.normal(size=n))
        assert 0.0 <= res.r_squared <= 1.0
        if res.r_squared < 1:
            assert res.f_statistic == pytest.approx(_f_identity(res), rel=1e-9, abs=1e-12)

    def test_published_shape(self):
        assert (0.68 / 6) / (0.32 / 9) == pytest.approx(3.1875)
        # design with 16 cells, 4+4 levels -> df (6, 9)
        eps = [e for e in (0.1, 1.0, 10.0, 100.0) for _ in range(4)]
        dlt = [d for _ in range(4) for d in (1e-2, 1e-3, 1e-4, 1e-5)]
        X, names = dummy_design({"eps": eps, "delta": dlt})
        res = ols_fit(X, np.random.default_rng(0).normal(size=16))
        assert (res.df_model, res.df_residual) == (6, 9)
        assert names[0] == "intercept" and len(names) == 7

    def test_rank_deficient(self):
        X = np.column_stack([np.ones(5), np.arange(5.0), 2 * np.arange(5.0)])
        with pytest.raises(SingularDesignError):
            ols_fit(X, np.arange(5.0))

    def test_too_few_rows(self):
        with pytest.raises(SingularDesignError):
            ols_fit(np.ones((2, 2)), [1.0, 2.0])


class TestDummyDesign:
    def test_reference_level(self):
        X, names = dummy_design({"eps": [1.0, 0.1, 10.0, 0.1]})
        assert names == ["intercept", "eps=1", "eps=10"]
        np.testing.assert_array_equal(X, [[1, 1, 0], [1, 0, 0], [1, 0, 1], [1, 0, 0]])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            dummy_design({"a": [1, 2], "b": [1]})
