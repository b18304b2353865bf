import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from benignlab import spectrum as sp


def test_construction_sorts_with_warning():
    with pytest.warns(UserWarning, match="sorted"):
        s = sp.CovarianceSpectrum([1.0, 3.0, 2.0])
    assert list(s.lambdas) == [3.0, 2.0, 1.0]
    with pytest.raises(ValueError):
        s.lambdas[0] = 5.0


@pytest.mark.parametrize("bad", [[1.0, 0.0], [1.0, -2.0], [], [np.nan]])
def test_rejects_nonpositive(bad):
    with pytest.raises(sp.SpectrumError):
        sp.CovarianceSpectrum(bad)


def test_json_round_trip():
    s = sp.poly(1.5, 30)
    assert sp.CovarianceSpectrum.from_json(s.to_json()) == s


@pytest.mark.parametrize("text, expected", [
    ("spike(3, 0.001, 10)", sp.spike(3, 0.001, 10)),
    ({"preset": "isotropic", "p": 4}, sp.isotropic(4)),
    ([2.0, 1.0], sp.explicit([2.0, 1.0])),
    ("[4, 2, 2]", sp.explicit([4, 2, 2])),
    ("explicit([5, 1])", sp.explicit([5, 1])),
])
def test_parse_spectrum(text, expected):
    assert sp.parse_spectrum(text) == expected


@pytest.mark.parametrize("bad", ["nope(1)", "spike(3, 0.001", {"preset": "zeta", "p": 3}, 42])
def test_parse_spectrum_errors(bad):
    with pytest.raises(sp.SpectrumError):
        sp.parse_spectrum(bad)


@pytest.mark.parametrize("lam, j, expected", [
    ([1, 1, 1, 1], 0, 4.0),
    ([1, 1, 0.5, 0.5], 2, 1.0),
])
def test_tail_sum_examples(lam, j, expected):
    assert sp.tail_sum(sp.explicit(lam), j) == expected


def test_tail_sum_spike():
    assert sp.tail_sum(sp.spike(3, 0.001, 1000), 3) == pytest.approx(0.997, rel=1e-12)


def test_tail_sum_index_errors():
    with pytest.raises(IndexError):
        sp.tail_sum(sp.isotropic(3), 3)


def test_effective_rank_examples():
    iso = sp.effective_ranks(sp.isotropic(100), 0)
    assert iso.r == pytest.approx(100) and iso.R == pytest.approx(100)
    rep = sp.effective_ranks(sp.explicit([4, 2, 2]), 0)
    assert (rep.s, rep.r) == (8.0, 2.0)
    assert rep.R == pytest.approx(64 / 24, rel=1e-14)


def test_subset_rank_examples():
    assert sp.subset_ranks(sp.explicit([3.0, 1.0]), {1}) == sp.EffectiveRankReport(None, 3.0, 1.0, 1.0)
    rep = sp.subset_ranks(sp.explicit([9, 4, 1]), {2, 3})
    assert rep.s == 5 and rep.r == 1.25 and rep.R == pytest.approx(25 / 17, rel=1e-14)


def test_subset_matches_tail():
    s = sp.exp(0.9, 40)
    for j in (0, 7, 39):
        a = sp.effective_ranks(s, j)
        b = sp.subset_ranks(s, range(j + 1, 41))
        assert (a.s, a.r, a.R) == pytest.approx((b.s, b.r, b.R), rel=1e-14)


def test_subset_rank_errors():
    with pytest.raises(sp.SpectrumError):
        sp.subset_ranks(sp.isotropic(3), [])
    with pytest.raises(IndexError):
        sp.subset_ranks(sp.isotropic(3), [0])


log_spectra = st.lists(st.floats(-6, 3), min_size=1, max_size=60).map(
    lambda xs: sp.CovarianceSpectrum(sorted((10.0 ** x for x in xs), reverse=True)))


@given(log_spectra, st.data())
def test_rank_sandwich(spec, data):
    j = data.draw(st.integers(0, spec.p - 1))
    rep = sp.effective_ranks(spec, j)
    assert rep.r <= rep.R * (1 + 1e-12)
    assert rep.R <= rep.r ** 2 * (1 + 1e-12)


@given(log_spectra)
def test_vectorised_ranks_agree(spec):
    s, r, R = sp.all_effective_ranks(spec)
    for j in range(spec.p):
        rep = sp.effective_ranks(spec, j)
        assert (s[j], r[j], R[j]) == pytest.approx((rep.s, rep.r, rep.R), rel=1e-10)


@given(log_spectra)
def test_tail_sum_strictly_decreasing(spec):
    tails = [sp.tail_sum(spec, j) for j in range(spec.p)]
    assert all(a > b for a, b in zip(tails, tails[1:]))


def test_r_decreases_as_leading_tail_entry_grows():
    # hold s_0 fixed, shift mass into lambda_1
    a = sp.explicit([2.0, 1.0, 1.0])
    b = sp.explicit([3.0, 0.5, 0.5])
    assert sp.effective_ranks(b, 0).r < sp.effective_ranks(a, 0).r


def test_critical_index_examples():
    assert sp.critical_index(sp.isotropic(1000), 10, b=5).k == 0
    assert sp.critical_index(sp.spike(3, 0.001, 5000), 50, b=10).k == 3
    inf = sp.critical_index(sp.spike(3, 0.001, 5000), 10 ** 9)
    assert inf.infinite
    with pytest.raises(sp.SpectrumError, match="infinite"):
        inf.require_finite()


def test_critical_index_definition():
    spec = sp.poly(1.0, 3000)
    ci = sp.critical_index(spec, 20)
    k = ci.require_finite()
    assert sp.effective_ranks(spec, k).r >= ci.b * 20
    assert all(sp.effective_ranks(spec, j).r < ci.b * 20 for j in range(k))


@given(log_spectra, st.integers(1, 20), st.floats(0.1, 5), st.floats(1.0, 3.0), st.integers(0, 10))
def test_critical_index_monotone(spec, n, b, factor, dn):
    def k(n_, b_):
        v = sp.critical_index(spec, n_, b_).k
        return math.inf if v is None else v
    assert k(n, b) <= k(n, b * factor)
    assert k(n, b) <= k(n + dn, b)


def test_psi_examples():
    e1 = np.eye(5)[0]
    np.testing.assert_allclose(sp.psi_from_init(e1, 1.0, 81, 81.0), (2 / 3) * e1, rtol=1e-15)
    t = np.array([0.3, -1.2, 0.5])
    np.testing.assert_allclose(sp.psi_from_init(4 * t, 0.7, 50, 3.0), 2 * sp.psi_from_init(t, 0.7, 50, 3.0))
    np.testing.assert_allclose(sp.init_for_guess((2 / 3) * e1, 1.0, 81, 81.0), e1, rtol=1e-14)
    g = np.array([0.1, 0.2, -0.4])
    ratio = np.linalg.norm(sp.init_for_guess(2 * g, 0.5, 30, 2.0)) / np.linalg.norm(sp.init_for_guess(g, 0.5, 30, 2.0))
    assert ratio == pytest.approx(4.0, rel=1e-14)


def test_psi_zero_and_bad_args():
    assert not np.any(sp.w_from_init(np.zeros(3)))
    with pytest.raises(sp.SpectrumError):
        sp.psi_from_init(np.zeros(3), 1.0, 10, 1.0)
    with pytest.raises(sp.SpectrumError):
        sp.init_for_guess(np.ones(3), 0.0, 10, 1.0)


vectors = st.lists(st.floats(-10, 10), min_size=1, max_size=8).map(np.array).filter(
    lambda v: np.linalg.norm(v) > 1e-3)


@given(vectors, st.floats(0.01, 10), st.integers(1, 10 ** 6), st.floats(1e-3, 1e4))
def test_psi_round_trip(psi, sigma, n, s_k):
    back = sp.psi_from_init(sp.init_for_guess(psi, sigma, n, s_k), sigma, n, s_k)
    assert np.linalg.norm(back - psi) <= 1e-12 * np.linalg.norm(psi)


def test_no_warning_for_sorted_presets():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sp.spike(2, 0.01, 50), sp.poly(2.0, 10), sp.exp(0.5, 10)
