import numpy as np
import pytest

from qrgmm.core import SeededRng, identity_basis, make_grid, polynomial_basis, validate_dataset
from qrgmm.errors import DimensionMismatch, InvalidTau, RankDeficient
from qrgmm.metamodel import (GenerativeMetamodel, QuantileCoefficientTable, crossing_fraction,
                             crossing_frequency, fit_grid, generate, generate_rows, implied_cdf,
                             interpolate_coefficients, model_from_coefficients, predict_quantile,
                             rearrange, sample_rows)
from qrgmm.metrics import ks_vs_cdf
from qrgmm.solver import fit
from qrgmm.testbeds import TP1, sample_dataset, tp1_beta, tp1_quantile


@pytest.fixture(scope="module")
def tp1_data():
    return sample_dataset(TP1, 10000, SeededRng(77))


@pytest.fixture(scope="module")
def tp1_model(tp1_data):
    return fit_grid(tp1_data, identity_basis(4), 100)


def true_tp1_model(m=100):
    return model_from_coefficients(identity_basis(4), np.array([tp1_beta(t) for t in make_grid(m).levels]))


def nodes_model(values):
    """Model over a constant input whose node values are ``values``."""
    return model_from_coefficients(identity_basis(1), np.asarray(values, dtype=float)[:, None])


# ---------------------------------------------------------------- fit_grid

def test_fit_grid_recovers_tp1_median(tp1_model):
    row = tp1_model.table.coefficients[49]  # tau = 0.5
    assert np.max(np.abs(row - [5, 1, 2, 0.5])) < 0.1
    assert not tp1_model.rearranged


def test_fit_grid_single_level_equals_fit():
    ds = validate_dataset([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]], [0.3, 1.9, 2.2])
    model = fit_grid(ds, identity_basis(2), 2)
    assert model.table.coefficients.shape == (1, 2)
    assert np.array_equal(model.table.coefficients[0], fit(ds, 0.5).beta)


def test_fit_grid_rank_deficient_tagged(rng):
    x = rng.uniform(size=(50, 2))
    X = np.column_stack([np.ones(50), x, x[:, 1]])
    ds = validate_dataset(X, rng.normal(size=50))
    with pytest.raises(RankDeficient) as info:
        fit_grid(ds, identity_basis(4), 10)
    assert info.value.tau == 0.1
    assert "tau=0.1" in str(info.value)


def test_fit_grid_basis_mismatch(tp1_data):
    with pytest.raises(DimensionMismatch):
        fit_grid(tp1_data, identity_basis(3), 10)


def test_fit_grid_rows_are_level_fits(rng):
    X = np.column_stack([np.ones(200), rng.uniform(0, 4, 200)])
    y = X @ [1, 2] + rng.normal(size=200)
    ds = validate_dataset(X, y)
    model = fit_grid(ds, identity_basis(2), 5)
    for j, tau in enumerate(model.table.grid.levels):
        assert np.array_equal(model.table.coefficients[j], fit(ds, tau).beta)


def test_fit_grid_polynomial_basis(rng):
    x = rng.uniform(-1, 1, size=(500, 2))
    y = 1 + x[:, 0] ** 2 - x[:, 0] * x[:, 1] + 0.1 * rng.normal(size=500)
    model = fit_grid(validate_dataset(x, y), polynomial_basis(2, 2), 4)
    assert np.allclose(model.table.coefficients[1], [1, 0, 0, 1, -1, 0], atol=0.1)


def test_fit_grid_cache_shares_nested_levels(tp1_data):
    cache = {}
    fine = fit_grid(tp1_data, identity_basis(4), 20, cache=cache)
    coarse = fit_grid(tp1_data, identity_basis(4), 10, cache=cache)
    assert np.array_equal(coarse.table.coefficients, fine.table.coefficients[1::2])
    assert len(cache) == 19


def test_table_validation():
    with pytest.raises(DimensionMismatch):
        QuantileCoefficientTable(make_grid(4), np.zeros((2, 1)))
    with pytest.raises(DimensionMismatch):
        GenerativeMetamodel(identity_basis(2), QuantileCoefficientTable.from_array(np.zeros((3, 1))))


# ---------------------------------------------------------------- interpolation

def test_interpolate_examples():
    table = QuantileCoefficientTable.from_array([0.0, 1.0, 2.0])
    assert interpolate_coefficients(table, 0.5)[0] == 1.0
    assert interpolate_coefficients(table, 0.625)[0] == 1.5
    assert interpolate_coefficients(table, 0.9)[0] == 2.0
    assert interpolate_coefficients(table, 0.1)[0] == 0.0


def test_interpolate_invalid_tau():
    table = QuantileCoefficientTable.from_array([0.0, 1.0, 2.0])
    for t in (0.0, 1.0, -1, 2):
        with pytest.raises(InvalidTau):
            interpolate_coefficients(table, t)


def test_predict_true_tp1():
    model = true_tp1_model()
    assert predict_quantile(model, [1, 4, -1, 3], 0.5) == pytest.approx(8.5, abs=1e-12)


def test_predict_constant_table(rng):
    c = rng.normal(size=4)
    model = model_from_coefficients(identity_basis(4), np.tile(c, (9, 1)))
    x = rng.normal(size=4)
    for tau in rng.uniform(size=20):
        assert predict_quantile(model, x, tau) == pytest.approx(c @ x, rel=1e-13, abs=1e-13)


def test_predict_rearranged():
    model = nodes_model([3, 1, 2]).with_rearrangement(True)
    assert np.array_equal(predict_quantile(model, [1.0], [0.25, 0.5, 0.75]), [1, 2, 3])
    assert predict_quantile(model, [1.0], 0.375) == 1.5


def test_predict_matches_interpolated_coefficients(tp1_model, rng):
    for _ in range(50):
        x = np.concatenate([[1], rng.uniform([0, -5, 0], [10, 5, 5])])
        tau = rng.uniform()
        beta = interpolate_coefficients(tp1_model.table, tau)
        assert predict_quantile(tp1_model, x, tau) == pytest.approx(beta @ x, rel=1e-12, abs=1e-12)


def test_predict_dimension_mismatch(tp1_model):
    with pytest.raises(DimensionMismatch):
        predict_quantile(tp1_model, [1, 2, 3], 0.5)


def test_node_exactness(tp1_model, rng):
    C = tp1_model.table.coefficients
    for _ in range(20):
        x = np.concatenate([[1], rng.uniform([0, -5, 0], [10, 5, 5])])
        pred = predict_quantile(tp1_model, x, tp1_model.table.grid.levels)
        assert np.max(np.abs(pred - C @ x)) < 1e-12


def test_piecewise_linearity(tp1_model, rng):
    m = tp1_model.m
    for _ in range(200):
        x = np.concatenate([[1], rng.uniform([0, -5, 0], [10, 5, 5])])
        j = rng.integers(1, m - 1)
        t1, t2 = sorted(rng.uniform(j / m, (j + 1) / m, size=2))
        lam = rng.uniform()
        mid = predict_quantile(tp1_model, x, lam * t1 + (1 - lam) * t2)
        blend = lam * predict_quantile(tp1_model, x, t1) + (1 - lam) * predict_quantile(tp1_model, x, t2)
        assert abs(mid - blend) < 1e-10


# ---------------------------------------------------------------- generation

def test_generate_constant_model():
    model = model_from_coefficients(identity_basis(1), np.full((7, 1), 7.0))
    assert np.all(generate(model, [1.0], 1000, SeededRng(3)) == 7.0)


def test_generate_deterministic(tp1_model):
    a = generate(tp1_model, [1, 6, 1, 2], 500, SeededRng(8))
    b = generate(tp1_model, [1, 6, 1, 2], 500, SeededRng(8))
    assert np.array_equal(a, b)


def test_generate_true_tp1_mean():
    s = generate(true_tp1_model(), [1, 4, -1, 3], 100000, SeededRng(11))
    assert abs(s.mean() - 8.5) < 0.013


@pytest.mark.parametrize("rearranged", [False, True])
def test_generate_equals_predict_at_uniforms(tp1_model, rearranged):
    model = tp1_model.with_rearrangement(rearranged)
    x = np.array([1, 6, 1, 2.0])
    s = generate(model, x, 2000, SeededRng(5))
    u = SeededRng(5).uniform(2000)
    assert np.array_equal(s, predict_quantile(model, x, u))


def test_generate_within_node_range(tp1_model):
    x = np.array([1, 9, -4, 4.5])
    s = generate(tp1_model, x, 20000, SeededRng(6))
    v = tp1_model.node_values(x)
    assert s.min() >= v.min() and s.max() <= v.max()


def test_generate_bad_inputs(tp1_model):
    with pytest.raises(DimensionMismatch):
        generate(tp1_model, [1, 2], 10, SeededRng(1))
    from qrgmm.errors import ConfigError
    with pytest.raises(ConfigError):
        generate(tp1_model, [1, 6, 1, 2], 0, SeededRng(1))


@pytest.mark.parametrize("rearranged", [False, True])
def test_sample_rows_matches_predict(tp1_model, rearranged, rng):
    model = tp1_model.with_rearrangement(rearranged)
    X = np.column_stack([np.ones(300), rng.uniform([0, -5, 0], [10, 5, 5], size=(300, 3))])
    u = np.concatenate([rng.uniform(size=296), [1e-9, 0.005, 0.995, 1 - 1e-9]])
    got = sample_rows(model, X, u)
    want = np.array([predict_quantile(model, X[k], u[k]) for k in range(300)])
    assert np.allclose(got, want, rtol=1e-12, atol=1e-11)


def test_generate_rows_consumes_one_uniform_per_row(tp1_model, rng):
    X = np.column_stack([np.ones(50), rng.uniform([0, -5, 0], [10, 5, 5], size=(50, 3))])
    a = generate_rows(tp1_model, X, SeededRng(3))
    assert np.array_equal(a, sample_rows(tp1_model, X, SeededRng(3).uniform(50)))


# ---------------------------------------------------------------- rearrangement and crossing

def test_rearrange_examples():
    assert np.array_equal(rearrange(nodes_model([3, 1, 2]), [1.0]), [1, 2, 3])
    assert np.array_equal(rearrange(nodes_model([1, 2, 3]), [1.0]), [1, 2, 3])
    assert np.array_equal(rearrange(nodes_model([5, 5, 5]), [1.0]), [5, 5, 5])


def test_crossing_examples():
    assert crossing_frequency(nodes_model([1, 2, 3]), [1.0]) == 0.0
    assert crossing_frequency(nodes_model([3, 1, 2]), [1.0]) == 1.0
    assert crossing_frequency(nodes_model([1, 3, 2]), [1.0]) == pytest.approx(2 / 3)
    assert crossing_fraction([5, 5, 5]) == 0.0


def test_rearranged_always_monotone_and_uncrossed(rng):
    C = rng.normal(size=(30, 3))
    model = model_from_coefficients(identity_basis(3), C, rearranged=True)
    taus = np.linspace(1e-6, 1 - 1e-6, 2001)
    for _ in range(50):
        x = rng.normal(size=3)
        q = predict_quantile(model, x, taus)
        assert np.all(np.diff(q) >= 0)
        assert crossing_frequency(model, x) == 0.0
        assert crossing_fraction(rearrange(model, x)) == 0.0


def test_rearrange_identity_on_monotone(tp1_model):
    x = np.array([1, 6, 1, 2.0])
    v = tp1_model.node_values(x)
    if np.all(np.diff(v) >= 0):
        assert np.array_equal(rearrange(tp1_model, x), v)


# ---------------------------------------------------------------- implied CDF

def test_implied_cdf_structure():
    model = nodes_model([0.0, 1.0, 1.0, 3.0])  # m = 5
    F = implied_cdf(model, [1.0])
    assert F(-0.1) == 0.0
    assert F(0.0) == pytest.approx(0.2)  # lower atom
    assert F(0.5) == pytest.approx(0.3)
    assert F(1.0) == pytest.approx(0.6)  # flat segment counts in full
    assert F(2.0) == pytest.approx(0.7)
    assert F(3.0) == 1.0


def test_implied_cdf_inverts_quantile(tp1_model, rng):
    model = tp1_model.with_rearrangement(True)
    x = np.array([1, 6, 1, 2.0])
    F = implied_cdf(model, x)
    u = rng.uniform(0.02, 0.98, size=200)
    assert np.allclose(F(predict_quantile(model, x, u)), u, atol=1e-9)


def test_implied_cdf_nonmonotone_matches_monte_carlo():
    model = nodes_model([0.0, 2.0, 1.0, 3.0, 2.5])
    F = implied_cdf(model, [1.0])
    s = generate(model, [1.0], 400000, SeededRng(2))
    for y in (0.5, 1.2, 1.9, 2.2, 2.7):
        assert F(y) == pytest.approx(np.mean(s <= y), abs=4e-3)


@pytest.mark.parametrize("seed", [1, 2])
def test_self_consistency_ks(tp1_model, seed):
    K = 100000
    x = np.array([1, 6, 1, 2.0])
    for model in (tp1_model, tp1_model.with_rearrangement(True)):
        s = generate(model, x, K, SeededRng(seed))
        assert ks_vs_cdf(s, implied_cdf(model, x)) < 1.63 / np.sqrt(K) * 1.5


# ---------------------------------------------------------------- accuracy

@pytest.mark.slow
def test_middle_interval_accuracy_improves_with_n():
    x = np.array([1, 6, 1, 2.0])
    taus = np.linspace(0.1, 0.9, 161)
    truth = tp1_quantile(x, taus)
    errs = []
    for n in (400, 2500, 10000):
        e = []
        for r in range(6):
            ds = sample_dataset(TP1, n, SeededRng(31, (n, r)))
            model = fit_grid(ds, identity_basis(4), int(np.sqrt(n)))
            e.append(np.max(np.abs(predict_quantile(model, x, taus) - truth)))
        errs.append(np.mean(e))
    assert errs[0] > errs[1] > errs[2]


def test_implied_cdf_left_limits():
    model = nodes_model([0.0, 1.0, 1.0, 3.0])
    F = implied_cdf(model, [1.0])
    assert F.left(0.0) == 0.0
    assert F.left(1.0) == pytest.approx(0.4)
    assert F.left(3.0) == pytest.approx(0.8)
    assert F.left(2.0) == F(2.0)
