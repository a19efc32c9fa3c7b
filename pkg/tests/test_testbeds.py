import mpmath
import numpy as np
import pytest

from oracles import BIVARIATE_CORR, NORMAL_Q, TP1_Q975_AT_6_1_2, TP2_Q90_AT_4_4
from qrgmm.core import SeededRng
from qrgmm.errors import ConfigError, InvalidTau, MissingConditioner
from qrgmm.metrics import ks_vs_cdf, summary_stats
from qrgmm.testbeds import (BIVARIATE, BIVARIATE_CORRELATION, TP1, TP2, bivariate_quantiles,
                            get_problem, laplace_cdf, laplace_quantile, normal_cdf, normal_quantile,
                            sample_dataset, tp1_beta, tp1_cdf, tp1_quantile, tp2_quantile)


# ---------------------------------------------------------------- inverse CDFs

@pytest.mark.parametrize("tau", sorted(NORMAL_Q))
def test_normal_quantile_frozen(tau):
    assert normal_quantile(tau) == pytest.approx(NORMAL_Q[tau], abs=1e-9)


def test_normal_quantile_vs_mpmath(rng):
    mpmath.mp.dps = 30
    for tau in np.concatenate([rng.uniform(1e-6, 1 - 1e-6, 40), [1e-10, 0.5, 1 - 1e-10]]):
        ref = float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(tau) - 1))
        assert normal_quantile(tau) == pytest.approx(ref, abs=1e-9)


def test_normal_quantile_symmetry(rng):
    assert normal_quantile(0.5) == 0.0
    t = rng.uniform(0.001, 0.999, 100)
    assert np.max(np.abs(normal_quantile(t) + normal_quantile(1 - t))) < 1e-12


def test_laplace_quantile_examples():
    assert laplace_quantile(0.5) == 0.0
    assert laplace_quantile(0.25) == pytest.approx(np.log(0.5), abs=1e-15)
    assert laplace_quantile(0.9) == pytest.approx(1.6094379124341003, abs=1e-12)


def test_cdfs_invert_quantiles(rng):
    t = rng.uniform(0.001, 0.999, 200)
    assert np.allclose(normal_cdf(normal_quantile(t)), t, atol=1e-12)
    assert np.allclose(laplace_cdf(laplace_quantile(t)), t, atol=1e-12)


@pytest.mark.parametrize("f", [normal_quantile, laplace_quantile])
def test_invalid_tau(f):
    for t in (0.0, 1.0, -0.5, np.nan):
        with pytest.raises(InvalidTau):
            f(t)


# ---------------------------------------------------------------- TP1 / TP2

def test_tp1_examples():
    assert tp1_quantile([1, 6, 1, 2], 0.5) == pytest.approx(14.0, abs=1e-12)
    assert tp1_quantile([1, 6, 1, 2], 0.975) == pytest.approx(TP1_Q975_AT_6_1_2, abs=1e-9)
    assert tp1_quantile([1, 4, -1, 3], 0.5) == pytest.approx(8.5, abs=1e-12)


def test_tp2_examples():
    assert tp2_quantile([1, 4, 4], 0.5) == pytest.approx(0.8, abs=1e-12)
    assert tp2_quantile([1, 0, 0], 0.25) == pytest.approx(5 * np.log(0.5), abs=1e-12)
    assert tp2_quantile([1, 4, 4], 0.9) == pytest.approx(TP2_Q90_AT_4_4, abs=1e-9)


def test_oracles_strictly_increasing(rng):
    tau = np.linspace(0.001, 0.999, 999)
    for _ in range(20):
        x1 = TP1.sample_covariates(1, SeededRng(int(rng.integers(1 << 30))))[0]
        x2 = TP2.sample_covariates(1, SeededRng(int(rng.integers(1 << 30))))[0]
        assert np.all(np.diff(tp1_quantile(x1, tau)) > 0)
        assert np.all(np.diff(tp2_quantile(x2, tau)) > 0)
        assert np.all(np.diff(bivariate_quantiles(x2, tau, 1)) > 0)
        assert np.all(np.diff(bivariate_quantiles(x2, tau, 2, 0.7)) > 0)


def test_tp1_linear_in_quantile_structure(rng):
    for _ in range(100):
        x = np.concatenate([[1], rng.uniform([0, -5, 0], [10, 5, 5])])
        tau = rng.uniform(0.001, 0.999)
        z = NORMAL_Q.get(tau, normal_quantile(tau))
        beta = np.array([5 + z, 1 + 0.1 * z, 2 + 0.2 * z, 0.5 + 0.05 * z])
        assert np.allclose(tp1_beta(tau), beta, rtol=1e-14)
        assert tp1_quantile(x, tau) == pytest.approx(beta @ x, rel=1e-13, abs=1e-12)


def test_tp1_inverse_cdf_sampling():
    x = np.array([1, 6, 1, 2.0])
    s = TP1.sample_at(x, 100000, SeededRng(2024))
    assert ks_vs_cdf(s, lambda y: tp1_cdf(x, y)) < 0.006


# ---------------------------------------------------------------- bivariate

def test_bivariate_examples():
    assert bivariate_quantiles([1, 3, 0], 0.5, 1) == 3.0
    assert bivariate_quantiles([1, 0, 1], 0.5, 2, y1=2.0) == 2.0
    assert BIVARIATE_CORRELATION == pytest.approx(BIVARIATE_CORR, abs=1e-15)
    with pytest.raises(MissingConditioner):
        bivariate_quantiles([1, 0, 1], 0.5, 2)


def test_bivariate_sample_correlation():
    Y = BIVARIATE.sample_at([1, 3, 1], 100000, SeededRng(5))
    assert np.corrcoef(Y.T)[0, 1] == pytest.approx(BIVARIATE_CORR, abs=0.01)


# ---------------------------------------------------------------- datasets

def test_sample_dataset_single_row():
    ds = sample_dataset(TP1, 1, SeededRng(3))
    assert ds.design.shape == (1, 4) and ds.design[0, 0] == 1.0
    x = ds.design[0]
    assert tp1_quantile(x, 1e-12) < ds.response[0] < tp1_quantile(x, 1 - 1e-12)


def test_sample_dataset_deterministic():
    a = sample_dataset(TP2, 500, SeededRng(11))
    b = sample_dataset(TP2, 500, SeededRng(11))
    c = sample_dataset(TP2, 500, SeededRng(12))
    assert np.array_equal(a.design, b.design) and np.array_equal(a.response, b.response)
    assert not np.array_equal(a.response, c.response)


def test_covariate_domains():
    X = TP1.sample_covariates(20000, SeededRng(4))
    assert np.all(X[:, 0] == 1)
    for col, (lo, hi) in zip(X[:, 1:].T, [(0, 10), (-5, 5), (0, 5)]):
        assert lo < col.min() and col.max() < hi
        assert col.mean() == pytest.approx((lo + hi) / 2, abs=0.05 * (hi - lo))


def test_tp1_unconditional_mean():
    n = 100000
    ds = sample_dataset(TP1, n, SeededRng(8))
    mean, sd = summary_stats(ds.response)
    assert abs(mean - 11.25) < 3 * sd / np.sqrt(n)


def test_sample_dataset_csv(tmp_path):
    from qrgmm.core import read_dataset_csv
    path = tmp_path / "d.csv"
    ds = sample_dataset(BIVARIATE, 20, SeededRng(1), csv_path=path)
    back = read_dataset_csv(path, add_intercept=True)
    assert np.array_equal(back.design, ds.design)
    assert np.array_equal(back.response, ds.response)


def test_get_problem():
    assert get_problem("tp2") is TP2
    with pytest.raises(ConfigError):
        get_problem("bank")
