import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from mchankel.hankel_core import HankelGeometry, hankel_lift
from mchankel.signal_gen import (
    LdsParams,
    MultiChannelSignal,
    RankDetectionError,
    SpectralParams,
    channel_incoherence,
    condition_number,
    detect_rank,
    gen_lds,
    gen_spectral,
    incoherence,
    lift_rank_gap,
    spectral_signal,
)


def sv(X, n_1):
    return np.linalg.svd(oracles.lift(X, n_1), compute_uv=False)


# ---- gen_spectral --------------------------------------------------------

def test_single_dc_mode_is_all_ones():
    p = SpectralParams(np.array([0.0]), np.array([0.0]), np.array([[1.0 + 0j]]))
    assert np.allclose(spectral_signal(p, 12), np.ones((1, 12)))


def test_generated_data_matches_parameters():
    sig = gen_spectral(3, 50, 4, seed=11, damped=True)
    p = sig.params
    assert np.allclose(sig.data, oracles.spectral(p.f, p.tau, p.D, 50), rtol=1e-12, atol=1e-12)
    assert np.all(p.tau > 0)


def test_amplitude_law():
    for e in (1.0, 0.5):
        D = gen_spectral(40, 20, 5, seed=2, amp_exponent=e).params.D
        mag = np.abs(D)
        assert mag.min() > 1 and mag.max() < 1 + 10**e


def test_undamped_r5_lift_has_rank_5():
    X = gen_spectral(1, 100, 5, seed=0).data
    s = sv(X, 50)
    assert s[5] / s[4] < 1e-8


def test_same_seed_is_bitwise_identical():
    a = gen_spectral(4, 64, 3, seed=99, damped=True, min_sep=0.05)
    b = gen_spectral(4, 64, 3, seed=99, damped=True, min_sep=0.05)
    assert a.data.tobytes() == b.data.tobytes()
    assert not np.array_equal(a.data, gen_spectral(4, 64, 3, seed=100).data)


def test_min_sep_respected():
    f = gen_spectral(1, 200, 8, seed=5, min_sep=0.08).params.f
    d = np.abs(f[:, None] - f[None, :])
    d = np.minimum(d, 1 - d)[~np.eye(8, dtype=bool)]
    assert d.min() >= 0.08


@pytest.mark.parametrize(
    "kwargs",
    [dict(n=9, r=5), dict(n=100, r=0), dict(n=100, r=5, min_sep=0.2), dict(n=100, r=10, min_sep=0.099)],
)
def test_gen_spectral_rejects(kwargs):
    with pytest.raises(ValueError):
        gen_spectral(2, seed=0, **kwargs)


def test_boost_first_scales_mode_one():
    a = gen_spectral(3, 40, 3, seed=4).params.D
    b = gen_spectral(3, 40, 3, seed=4, boost_first=10).params.D
    assert np.allclose(b[:, 0], 10 * a[:, 0])
    assert np.array_equal(b[:, 1:], a[:, 1:])


def test_signal_rejects_nonfinite():
    with pytest.raises(ValueError):
        MultiChannelSignal(np.array([[1.0, np.inf]]))


@given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**31), st.data())
def test_lift_rank_equals_mode_count(n_c, r, seed, data):
    n = 60
    n_1 = data.draw(st.integers(r, n + 1 - r))
    X = gen_spectral(n_c, n, r, seed, min_sep=1 / n).data
    g = HankelGeometry(n_c, n, n_1)
    assert lift_rank_gap(X, g, r) <= 1e-8


# ---- gen_lds -------------------------------------------------------------

def test_lds_identity_repeats_state():
    v = np.array([1.0, -2.0, 3j])
    X = gen_lds(LdsParams(np.eye(3), np.eye(3), v), 7).data
    assert np.allclose(X, np.repeat(v[:, None], 7, axis=1))


def test_lds_zero_dynamics():
    C = np.arange(6.0).reshape(3, 2)
    X = gen_lds(LdsParams(np.zeros((2, 2)), C, np.array([1.0, 1.0])), 5).data
    assert np.allclose(X[:, 0], C @ [1, 1])
    assert not np.any(X[:, 1:])


def test_lds_rank_equals_excited_modes(rng):
    # diagonalizable A with 6 modes, of which the initial state excites 4
    lam = np.exp(2j * np.pi * rng.uniform(size=6) - rng.uniform(0, 0.02, 6))
    T = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    A = T @ np.diag(lam) @ np.linalg.inv(T)
    z = np.array([1, 1, 1, 1, 0, 0], dtype=complex)
    C = rng.standard_normal((3, 6))
    X = gen_lds(LdsParams(A, C, T @ z), 60).data
    s = sv(X, 30)
    assert s[4] / s[3] < 1e-8 and s[3] / s[0] > 1e-6


def test_lds_shape_checks():
    with pytest.raises(ValueError):
        LdsParams(np.eye(2), np.eye(3), np.ones(2))
    with pytest.raises(ValueError):
        LdsParams(np.eye(2), np.eye(2), np.ones(3))
    with pytest.raises(ValueError):
        gen_lds(LdsParams(np.eye(2), np.eye(2), np.ones(2)), 0)


# ---- incoherence ---------------------------------------------------------

@pytest.mark.parametrize("n, n_1", [(10, 3), (10, 5), (11, 11)])
def test_all_ones_has_unit_incoherence(n, n_1):
    mu, mu_u, mu_v = incoherence(np.ones((1, n)), HankelGeometry(1, n, n_1))
    assert mu == pytest.approx(1.0) and mu_u == pytest.approx(1.0) and mu_v == pytest.approx(1.0)


@pytest.mark.parametrize("n, n_1, key", [(10, 6, "spike_mu_n10_n1_6"), (9, 3, "spike_mu_n9_n1_3")])
def test_spike_incoherence_frozen(n, n_1, key):
    X = np.zeros((1, n))
    X[0, 0] = 1.0
    assert incoherence(X, HankelGeometry(1, n, n_1), 1)[0] == pytest.approx(oracles.FROZEN[key], rel=1e-12)


def test_incoherence_matches_oracle():
    X = gen_spectral(3, 40, 3, seed=8).data
    assert incoherence(X, HankelGeometry(3, 40, 17), 3)[0] == pytest.approx(oracles.incoherence(X, 17, 3), rel=1e-10)


def test_incoherence_detects_rank():
    X = gen_spectral(2, 50, 4, seed=3, min_sep=0.02).data
    g = HankelGeometry(2, 50, 25)
    assert detect_rank(X, g) == 4
    assert incoherence(X, g) == incoherence(X, g, 4)


def test_incoherence_without_gap_fails():
    X = np.random.default_rng(0).standard_normal((2, 30))
    with pytest.raises(RankDetectionError):
        incoherence(X, HankelGeometry(2, 30, 15), 3)


@given(st.integers(2, 5), st.integers(1, 4), st.integers(0, 2**31), st.floats(0.1, 50), st.floats(0, 2 * np.pi))
def test_incoherence_invariances(n_c, r, seed, scale, angle):
    n = 48
    g = HankelGeometry(n_c, n, 20)
    X = gen_spectral(n_c, n, r, seed, min_sep=1 / n).data
    mu = incoherence(X, g, r)[0]
    Y = scale * X
    Y[n_c - 1] *= np.exp(1j * angle)
    assert incoherence(Y, g, r)[0] == pytest.approx(mu, rel=1e-8)


@given(st.integers(2, 6), st.integers(1, 4), st.integers(0, 2**31))
def test_multichannel_incoherence_bound(n_c, r, seed):
    n = 60
    g = HankelGeometry(n_c, n, 25)
    X = gen_spectral(n_c, n, r, seed, min_sep=1 / n).data
    assert incoherence(X, g, r)[0] <= n_c * channel_incoherence(X, g, r) * (1 + 1e-10)


# ---- condition_number ----------------------------------------------------

def test_rank_one_condition_number():
    X = gen_spectral(3, 30, 1, seed=1).data
    assert condition_number(X, HankelGeometry(3, 30, 15), 1) == 1.0


def test_orthogonal_equal_energy_modes():
    # Fourier-grid frequencies are exactly orthogonal over the full window
    n, n_1 = 31, 16
    f = np.array([2, 7, 11]) / (n + 1 - n_1)
    p = SpectralParams(f, np.zeros(3), np.ones((1, 3), dtype=complex))
    X = spectral_signal(p, n)
    s = sv(X, n_1)
    assert condition_number(X, HankelGeometry(1, n, n_1), 3) == pytest.approx(s[0] / s[2], rel=1e-12)
    assert condition_number(X, HankelGeometry(1, n, n_1), 3) == pytest.approx(1.0, abs=1e-10)


def test_boosted_mode_inflates_kappa_tenfold():
    g = HankelGeometry(1, 40, 20)
    f = np.array([0.1, 0.35])
    k = []
    for boost in (1.0, 10.0):
        X = spectral_signal(SpectralParams(f, np.zeros(2), np.array([[boost, 1.0]], dtype=complex)), 40)
        k.append(condition_number(X, g, 2))
    assert k[0] == pytest.approx(oracles.FROZEN["kappa_two_modes"], rel=1e-10)
    assert k[1] == pytest.approx(oracles.FROZEN["kappa_two_modes_boosted"], rel=1e-10)
    assert 8 < k[1] / k[0] < 12


def test_boost_first_inflates_kappa_on_random_signals():
    g = HankelGeometry(10, 200, 100)
    ratios = []
    for seed in range(10):
        base = gen_spectral(10, 200, 5, seed, min_sep=0.01)
        boosted = gen_spectral(10, 200, 5, seed, min_sep=0.01, boost_first=10)
        ratios.append(condition_number(boosted, g, 5) / condition_number(base, g, 5))
    assert 3 < np.median(ratios) <= 10.5
