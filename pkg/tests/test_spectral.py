import math
import warnings

import numpy as np
import pytest

from benignlab import spectrum as sp
from benignlab.datagen import Dataset, NoiseModel, ProblemInstance, derive_seed, parse_theta_star, sample_dataset
from benignlab.estimator import svd_factors
from benignlab.spectral import (
    ConcentrationStat,
    HypothesisError,
    HypothesisWarning,
    alpha_concentration_stat,
    eigen_range_stat,
    gram_head_tail,
    noise_projection_stat,
    smallest_eig_tail_prob,
    trace_gram_inverse_dense,
    trace_inverse_stat,
)
from benignlab.tables import loglog_slope


def _inst(spec, n, sigma=1.0, theta="zero"):
    return ProblemInstance(spec, parse_theta_star(theta, spec.p), n, noise=NoiseModel(sigma))


def test_stat_from_values():
    st = ConcentrationStat.from_values([1.0, 3.0], 2.0)
    assert (st.observed, st.relative_deviation, st.n_trials) == (2.0, 0.0, 2)
    assert st.std_error == pytest.approx(1.0)
    assert st.rms_deviation == pytest.approx(0.5)
    table = st.table()
    assert table.columns == ["trial", "observed", "predicted", "deviation"]
    assert table.rows[-1] == ("mean", 2.0, 2.0, 0.0)
    assert [r[3] for r in table.rows[:2]] == [-0.5, 0.5]


@pytest.mark.parametrize("k", [0, 1, 5, 29])
def test_gram_head_tail(k):
    spec = sp.exp(0.9, 30)
    ds = sample_dataset(_inst(spec, 8), 4)
    g = gram_head_tail(ds, spec, k)
    assert g.additivity_error <= 1e-10
    assert np.linalg.matrix_rank(g.H, tol=1e-10 * np.linalg.norm(g.A)) <= k
    if k == 0:
        assert not np.any(g.H)
        np.testing.assert_allclose(g.T, g.A, rtol=1e-12)
    if k == 29:
        assert np.linalg.matrix_rank(g.T, tol=1e-12) <= 1
    with pytest.raises(IndexError):
        gram_head_tail(ds, spec, 30)


def test_trace_routes_agree():
    ds = sample_dataset(_inst(sp.poly(0.5, 200), 30), 2)
    fast = svd_factors(ds.X).trace_gram_inverse()
    assert fast == pytest.approx(trace_gram_inverse_dense(ds.X), rel=1e-8)


def test_trace_equal_eigenvalues():
    n, s_k = 6, 37.0
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((20, n)))
    X = math.sqrt(s_k) * Q.T  # XX^T = s_k I
    assert svd_factors(X).trace_gram_inverse() == pytest.approx(n / s_k, rel=1e-13)


def test_trace_inverse_stat_band_and_headroom():
    inst = _inst(sp.spike(0, 0.001, 1000), 50)
    st = trace_inverse_stat(inst, 0, 20, master_seed=1)
    assert st.predicted == pytest.approx(50 / 1.0)
    assert abs(st.relative_deviation) <= 0.2
    with pytest.raises(HypothesisError, match="tail too thin"):
        trace_inverse_stat(_inst(sp.isotropic(150), 50), 0, 2, master_seed=1)


def test_eigen_range_small_n_within_band():
    inst = _inst(sp.isotropic(2001), 10)
    top, bottom = eigen_range_stat(inst, range(1, 2001), 20, master_seed=3)
    assert abs(top.relative_deviation) <= 0.25 and abs(bottom.relative_deviation) <= 0.25


def test_eigen_range_marchenko_pastur_edges():
    n, m = 100, 2000
    inst = _inst(sp.isotropic(m + 1), n)
    top, bottom = eigen_range_stat(inst, range(1, m + 1), 5, master_seed=3)
    q = math.sqrt(n / m)
    assert top.observed / top.predicted == pytest.approx((1 + q) ** 2, rel=0.05)
    assert bottom.observed / bottom.predicted == pytest.approx((1 - q) ** 2, rel=0.05)


def test_eigen_range_scalar_case():
    spec = sp.poly(1.0, 50)
    S = [2, 3, 5, 8]
    top, bottom = eigen_range_stat(_inst(spec, 1), S, 4000, master_seed=2)
    s_S = sum(spec.lambdas[i - 1] for i in S)
    assert top.observed == bottom.observed
    assert abs(top.observed - s_S) <= 3 * top.std_error


def test_eigen_range_errors():
    with pytest.raises(HypothesisError):
        eigen_range_stat(_inst(sp.isotropic(50), 10), range(1, 6), 1, 0)
    with pytest.raises(IndexError):
        eigen_range_stat(_inst(sp.isotropic(50), 10), [0, 1], 1, 0)


def test_eigen_range_deviation_slope():
    n, sizes = 5, [500, 2000, 8000, 32000]
    top_dev, bottom_dev = [], []
    for m in sizes:
        top, bottom = eigen_range_stat(_inst(sp.isotropic(m + 1), n), range(1, m + 1), 40, master_seed=1)
        top_dev.append(top.rms_deviation)
        bottom_dev.append(bottom.rms_deviation)
        assert np.all(bottom.values > 0)
    # R(S) = |S| for equal eigenvalues
    assert abs(loglog_slope(sizes, top_dev) + 0.5) <= 0.15
    assert abs(loglog_slope(sizes, bottom_dev) + 0.5) <= 0.15


def test_smallest_eig_tail_prob():
    inst = _inst(sp.isotropic(501), 5)
    rows = smallest_eig_tail_prob(inst, range(1, 501), [0.25, 0.5, 0.8, 0.999], 1000, master_seed=4)
    freqs = [r.frequency for r in rows]
    assert freqs == sorted(freqs)
    assert rows[0].count == 0 and rows[1].count == 0
    assert rows[1].display == "< 0.001"
    assert freqs[-1] >= 0.95
    with pytest.raises(ValueError):
        smallest_eig_tail_prob(inst, range(1, 501), [1.0], 10, 0)
    with pytest.raises(HypothesisError):
        smallest_eig_tail_prob(inst, range(1, 501), [0.5], 10, 0, rank_margin=1000)


def test_noise_projection():
    inst = _inst(sp.spike(2, 0.01, 400), 20, sigma=0.8)
    ds = sample_dataset(inst, 5)
    svd = svd_factors(ds.X)
    quiet = Dataset(ds.X, ds.y, np.zeros(20), ds.seed)
    assert noise_projection_stat(quiet, svd, 0.8).observed == 0.0
    loud = Dataset(ds.X, ds.y, 2 * ds.eps, ds.seed)
    base = noise_projection_stat(ds, svd, 0.8).observed
    assert noise_projection_stat(loud, svd, 0.8).observed == pytest.approx(4 * base, rel=1e-13)
    rng = np.random.default_rng(6)
    vals = [noise_projection_stat(Dataset(ds.X, ds.y, 0.8 * rng.standard_normal(20), 0), svd, 0.8).observed
            for _ in range(1000)]
    predicted = 0.8 ** 2 * svd.trace_gram_inverse()
    stat = ConcentrationStat.from_values(vals, predicted)
    assert abs(stat.observed - predicted) <= 3 * stat.std_error


def test_alpha_prediction_and_warnings():
    assert sp.psi_scale(1.0, 81, 81.0) == pytest.approx(2 / 3, rel=1e-15)
    with pytest.warns(HypothesisWarning):
        alpha_concentration_stat(_inst(sp.isotropic(60), 20, theta="e1"), 2, 0, k=0)


def test_alpha_concentration_band():
    inst = _inst(sp.spike(2, 0.001, 2000), 100, theta="e1")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisWarning)
        st = alpha_concentration_stat(inst, 30, master_seed=8, k=2)
    assert 0.8 <= st.observed / st.predicted <= 1.2
