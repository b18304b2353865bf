import math

import numpy as np
import pytest

from benignlab import spectrum as sp
from benignlab.datagen import (
    DataError,
    Dataset,
    FeatureDistribution,
    NoiseModel,
    ProblemInstance,
    derive_seed,
    export_csv,
    instance_from_config,
    load_csv,
    moment_summary,
    parse_theta_star,
    rank_certificate,
    sample_dataset,
    whitened_columns,
)


def _inst(n=20, p=60, sigma=1.0, kind="gaussian", spec=None):
    spec = spec or sp.isotropic(p)
    return ProblemInstance(spec, parse_theta_star("random_unit(3)", spec.p), n,
                           FeatureDistribution(kind), NoiseModel(sigma))


def test_feature_flags():
    assert FeatureDistribution("gaussian").satisfies_anticoncentration
    assert FeatureDistribution("uniform").satisfies_anticoncentration
    assert not FeatureDistribution("rademacher").satisfies_anticoncentration
    with pytest.raises(DataError):
        FeatureDistribution("cauchy")


@pytest.mark.parametrize("kind", ["gaussian", "uniform", "rademacher"])
def test_feature_moments(kind):
    rng = np.random.default_rng(0)
    n, trials, p = 50, 40, 30
    mean, var = moment_summary([FeatureDistribution(kind).sample(rng, (n, p)) for _ in range(trials)])
    scale = 1 / math.sqrt(n * trials)
    assert np.all(np.abs(mean) <= 4 * scale)
    assert np.all(np.abs(var - 1) <= 5 * scale)


def test_instance_validation():
    with pytest.raises(DataError, match="p > n"):
        _inst(n=60, p=60)
    with pytest.raises(DataError, match="length"):
        ProblemInstance(sp.isotropic(5), np.zeros(4), 2)
    with pytest.raises(DataError):
        NoiseModel(-1.0)


def test_noiseless_and_deterministic():
    inst = _inst(sigma=0.0)
    ds = sample_dataset(inst, 7)
    assert np.array_equal(ds.y, ds.X @ inst.theta_star)
    assert sample_dataset(inst, 7) == ds
    assert sample_dataset(inst, 8) != ds


def test_noise_is_added():
    inst = _inst(sigma=0.5)
    ds = sample_dataset(inst, 1)
    np.testing.assert_allclose(ds.y, ds.X @ inst.theta_star + ds.eps, rtol=0, atol=1e-14)


def test_column_variance_lln():
    inst = _inst(n=200, p=400)
    acc = np.zeros(400)
    for t in range(50):
        acc += sample_dataset(inst, derive_seed(11, t)).X.var(axis=0)
    assert np.all(np.abs(acc / 50 - 1.0) <= 0.25)


def test_derive_seed():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    seeds = {derive_seed(1, t) for t in range(200)}
    assert len(seeds) == 200
    assert derive_seed(1, 0) != derive_seed(2, 0)
    assert 0 <= derive_seed(2 ** 63, 5) < 2 ** 64


def test_whitened_columns_examples():
    ds = Dataset(np.array([[2.0, 1.0], [2.0, 3.0]]), np.zeros(2), np.zeros(2), 0)
    Z = whitened_columns(ds, sp.explicit([4.0, 1.0]))
    np.testing.assert_array_equal(Z[:, 0], [1.0, 1.0])
    iso = sample_dataset(_inst(), 3)
    np.testing.assert_array_equal(whitened_columns(iso, sp.isotropic(60)), iso.X)
    with pytest.raises(DataError):
        whitened_columns(iso, sp.isotropic(61))


def test_whitened_norms_and_gram():
    spec = sp.spike(3, 0.01, 300)
    inst = _inst(n=100, spec=spec)
    means = []
    for t in range(100):
        ds = sample_dataset(inst, derive_seed(5, t))
        Z = whitened_columns(ds, spec)
        means.append(np.mean(np.sum(Z * Z, axis=0)) / 100)
        if t == 0:
            G = (Z * spec.lambdas) @ Z.T
            A = ds.X @ ds.X.T
            assert np.linalg.norm(G - A) <= 1e-10 * np.linalg.norm(A)
    assert abs(np.mean(means) - 1) <= 0.1


def test_rank_certificate():
    X = np.random.default_rng(0).standard_normal((10, 20))
    ok, smin = rank_certificate(X)
    assert ok and smin > 0
    Xd = X.copy()
    Xd[3] = Xd[2]
    assert not rank_certificate(Xd)[0]
    assert rank_certificate(np.zeros((3, 6))) == (False, 0.0)


def test_theta_star_presets():
    assert not np.any(parse_theta_star("zero", 4))
    np.testing.assert_array_equal(parse_theta_star("e1", 3), [1, 0, 0])
    u = parse_theta_star({"preset": "random_unit", "seed": 2}, 9)
    assert np.linalg.norm(u) == pytest.approx(1.0)
    np.testing.assert_array_equal(parse_theta_star("explicit([1, 2])", 2), [1, 2])
    for bad in ("what", [1.0], None):
        with pytest.raises(DataError):
            parse_theta_star(bad, 3)


def test_instance_from_config():
    inst = instance_from_config({"spectrum": "spike(1, 0.1, 30)", "theta_star": "e1", "n": 10,
                                 "sigma": 0.3, "features": "uniform"})
    assert (inst.p, inst.n, inst.sigma, inst.feature_dist.kind) == (30, 10, 0.3, "uniform")


def test_csv_round_trip(tmp_path):
    ds = sample_dataset(_inst(n=4, p=7, sigma=0.2), 9)
    X, y, eps = load_csv(export_csv(ds, tmp_path / "d.csv"))
    assert np.array_equal(X, ds.X) and np.array_equal(y, ds.y) and np.array_equal(eps, ds.eps)
