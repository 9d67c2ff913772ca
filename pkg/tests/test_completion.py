import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import cplx
from mchankel import completion
from mchankel.completion import (
    BETA_GUARANTEED,
    FihtConfig,
    RunRecord,
    _resvd,
    am_fiht,
    default_beta,
    heavy_ball_rates,
    ram_fiht,
    rel_err_unobserved,
    trim,
)
from mchankel.hankel_core import HankelGeometry, RankRFactors, hankel_lift, truncate_rank
from mchankel.sampling import ObservationMask, sample_mask
from mchankel.signal_gen import gen_spectral


def problem(n_c=10, n=200, r=5, loss=0.5, mode="M1", seed=0):
    X = gen_spectral(n_c, n, r, seed, min_sep=2 / n).data
    mask = sample_mask(n_c, n, mode, loss, seed + 1000)
    return X, mask, HankelGeometry(n_c, n, n // 2)


def observe(X, mask):
    return np.where(mask.observed, X, 0)


def lift_sv(X, g):
    return np.linalg.svd(hankel_lift(X, g), compute_uv=False)


# ---- config --------------------------------------------------------------

def test_default_beta():
    assert default_beta(0.5) == pytest.approx(0.05)
    assert default_beta(1.0) == 0.0


@pytest.mark.parametrize(
    "kwargs", [dict(r=0), dict(r=2, beta=1.0), dict(r=2, beta=-0.1), dict(r=2, variant="X"), dict(r=2, mu=0.0)]
)
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        FihtConfig(**kwargs)


def test_large_beta_is_flagged_not_rejected():
    X, mask, g = problem(loss=0.3)
    _, rec = am_fiht(observe(X, mask), mask, g, FihtConfig(r=5, beta=0.9, max_iter=5))
    assert "beta_outside_guarantee" in rec.flags
    _, rec = am_fiht(observe(X, mask), mask, g, FihtConfig(r=5, beta=BETA_GUARANTEED / 2, max_iter=5))
    assert not rec.flags


# ---- rel_err_unobserved --------------------------------------------------

def test_rel_err_examples(rng):
    X = cplx(rng, 3, 10)
    mask = sample_mask(3, 10, "M1", 0.5, seed=0)
    assert rel_err_unobserved(X, X, mask) == 0.0
    assert rel_err_unobserved(np.zeros_like(X), X, mask) == pytest.approx(1.0)
    D = np.where(mask.observed, 0, 0.1 * cplx(rng, 3, 10))
    expect = np.linalg.norm(D) / np.linalg.norm(X[~mask.observed])
    assert rel_err_unobserved(X + D + np.where(mask.observed, 5.0, 0), X, mask) == pytest.approx(expect)
    with pytest.raises(ValueError):
        rel_err_unobserved(X, X, ObservationMask.full(3, 10))


# ---- trim ----------------------------------------------------------------

def random_factors(rng, m, n, r):
    U, _ = np.linalg.qr(cplx(rng, m, r))
    V, _ = np.linalg.qr(cplx(rng, n, r))
    return RankRFactors(U, np.sort(rng.uniform(1, 3, r))[::-1], V)


def factor_mu(L):
    r = L.rank
    return max(
        np.max(np.sum(np.abs(L.U) ** 2, 1)) * L.U.shape[0] / r,
        np.max(np.sum(np.abs(L.V) ** 2, 1)) * L.V.shape[0] / r,
    )


def test_trim_inert_under_cap(rng):
    g = HankelGeometry(2, 40, 20)
    L = random_factors(rng, *g.shape, 3)
    A, s, B = trim(L, 1e6, g)
    assert A is L.U and B is L.V and s is L.s


def test_trim_rescales_row_to_cap(rng):
    g = HankelGeometry(1, 30, 15)
    L = random_factors(rng, *g.shape, 2)
    mu = 2.0
    cap = np.sqrt(mu * 2 / 15)
    U = L.U.copy()
    U[3] *= 2 * cap / np.linalg.norm(U[3])
    U[5] = 0
    A, _, _ = trim(RankRFactors(U, L.s, L.V), mu, g)
    assert np.linalg.norm(A[3]) == pytest.approx(cap, rel=1e-14)
    assert np.allclose(A[3] / np.linalg.norm(A[3]), U[3] / np.linalg.norm(U[3]))
    assert not A[5].any()
    with pytest.raises(ValueError):
        trim(L, 0.0, g)


@given(st.integers(1, 3), st.integers(30, 70), st.integers(1, 3), st.integers(0, 2**31))
def test_trim_keeps_nearby_iterate_incoherent(n_c, n, r, seed):
    # an iterate within sigma_min / (10 sqrt 2) of an incoherent rank-r matrix,
    # trimmed at that matrix's mu, has incoherence at most (100/81) mu
    rng = np.random.default_rng(seed)
    g = HankelGeometry(n_c, n, n // 2)
    L_star = random_factors(rng, *g.shape, r)
    mu = factor_mu(L_star)
    E = np.zeros(g.shape, complex)
    E[0] = cplx(rng, g.n_2)
    E[:, 0] += cplx(rng, g.shape[0])
    E *= rng.uniform(0.5, 1) * L_star.s[-1] / (10 * np.sqrt(2)) / np.linalg.norm(E)
    L = truncate_rank(L_star.dense() + E, r)
    A, s, B = trim(L, mu, g)
    assert factor_mu(_resvd(A, s, B)) <= 100 / 81 * mu * (1 + 1e-12)


# ---- am_fiht -------------------------------------------------------------

def test_full_observation_converges_in_one_step():
    X = gen_spectral(4, 60, 3, seed=1).data
    g = HankelGeometry(4, 60, 30)
    mask = ObservationMask.full(4, 60)
    X_hat, rec = am_fiht(X, mask, g, FihtConfig(r=3, beta=0.0))
    assert rec.iterations == 1 and rec.reason == "tol"
    assert np.linalg.norm(X_hat.data - X) <= 1e-10 * np.linalg.norm(X)


def test_am_fiht_recovers_r15_problem():
    X, mask, g = problem(n_c=20, n=600, r=15, seed=3)
    X_hat, rec = am_fiht(observe(X, mask), mask, g, FihtConfig(r=15))
    assert rel_err_unobserved(X_hat, X, mask) < 1e-3
    assert rec.reason == "tol"


def test_am_fiht_recovers_lost_columns():
    X, mask, g = problem(mode="M2", seed=2)
    assert (~mask.observed).all(axis=0).sum() == 100
    X_hat, _ = am_fiht(observe(X, mask), mask, g, FihtConfig(r=5))
    assert rel_err_unobserved(X_hat, X, mask) < 1e-3


def test_iterates_stay_rank_r():
    # the lifted iterate has rank r exactly; the lift of its averaged signal
    # is within ||H X - L|| of rank r (Weyl) and so reaches rank r on convergence
    X, mask, g = problem(seed=4)
    for n_iter in (1, 3, 8):
        X_hat, rec = am_fiht(observe(X, mask), mask, g, FihtConfig(r=5, max_iter=n_iter))
        L = rec.final_factors
        assert L.rank <= 5
        H = hankel_lift(X_hat.data, g)
        s = np.linalg.svd(H, compute_uv=False)
        assert s[5] <= np.linalg.norm(H - L.dense(), 2) * (1 + 1e-10)
    X_hat, _ = am_fiht(observe(X, mask), mask, g, FihtConfig(r=5, tol_rel_change=1e-12))
    s = lift_sv(X_hat.data, g)
    assert s[5] / s[0] <= 1e-8


def test_history_lengths_and_determinism():
    X, mask, g = problem(seed=5)
    cfg = FihtConfig(r=5, seed=7)
    a_hat, a = am_fiht(observe(X, mask), mask, g, cfg, truth=X)
    b_hat, b = am_fiht(observe(X, mask), mask, g, cfg, truth=X)
    assert len(a.rel_change) == len(a.rel_error) == a.iterations
    assert a_hat.data.tobytes() == b_hat.data.tobytes()
    da, db = a.to_dict(), b.to_dict()
    da.pop("wall_time"), db.pop("wall_time")
    assert da == db


def test_truth_does_not_change_iterates():
    X, mask, g = problem(seed=6)
    a, _ = am_fiht(observe(X, mask), mask, g, FihtConfig(r=5))
    b, _ = am_fiht(observe(X, mask), mask, g, FihtConfig(r=5), truth=X)
    assert np.array_equal(a.data, b.data)


def test_stop_error_and_iterations_to():
    X, mask, g = problem(seed=7)
    _, rec = am_fiht(observe(X, mask), mask, g, FihtConfig(r=5, stop_error=1e-5), truth=X)
    assert rec.reason == "target"
    assert rec.iterations_to(1e-5) == rec.iterations
    assert rec.iterations_to(0.0) is None
    assert RunRecord(rel_error=[0.5, 0.1, 0.01]).iterations_to(0.1) == 2


def test_divergence_is_reported(monkeypatch):
    X, mask, g = problem(seed=8)
    monkeypatch.setattr(completion, "DIVERGENCE_LIMIT", -1.0)
    _, rec = am_fiht(observe(X, mask), mask, g, FihtConfig(r=5))
    assert rec.reason == "diverged" and rec.iterations == 1


def test_nonfinite_update_keeps_last_iterate(monkeypatch):
    X, mask, g = problem(seed=8)
    real = completion.hankel_pinv
    calls = []

    def flaky(Z, geom):
        calls.append(1)
        out = real(Z, geom)
        return out * np.nan if len(calls) == 4 else out

    monkeypatch.setattr(completion, "hankel_pinv", flaky)
    X_hat, rec = am_fiht(observe(X, mask), mask, g, FihtConfig(r=5))
    assert rec.reason == "diverged" and rec.iterations == 3
    assert np.all(np.isfinite(X_hat.data))


def test_input_checks():
    X, mask, g = problem()
    with pytest.raises(ValueError):
        am_fiht(X[:, :-1], mask, g, FihtConfig(r=5))
    with pytest.raises(ValueError):
        am_fiht(X, ObservationMask(np.zeros(X.shape, bool)), g, FihtConfig(r=5))


def test_noise_aware_stops_on_stall():
    X, mask, g = problem(seed=9)
    rng = np.random.default_rng(0)
    noisy = X + 1e-2 * np.abs(X).mean() * cplx(rng, *X.shape)
    _, rec = am_fiht(observe(noisy, mask), mask, g, FihtConfig(r=5, noise_aware=True, max_iter=300))
    assert rec.reason in ("stalled", "tol")
    assert rec.iterations < 300


# ---- ram_fiht ------------------------------------------------------------

@pytest.mark.parametrize("n_iter", [1, 6])
def test_ram_with_inert_trim_equals_am(n_iter):
    X, mask, g = problem(seed=10)
    a, _ = am_fiht(observe(X, mask), mask, g, FihtConfig(r=5, beta=0.0, max_iter=n_iter))
    b, rec = ram_fiht(observe(X, mask), mask, g, FihtConfig(r=5, beta=0.0, max_iter=n_iter, mu=1e12, variant="RAM"))
    assert a.data.tobytes() == b.data.tobytes()
    assert rec.extra["trimmed_iterations"] == 0


def test_ram_recovers_like_am():
    X, mask, g = problem(n_c=30, n=300, r=5, seed=11)
    a, _ = am_fiht(observe(X, mask), mask, g, FihtConfig(r=5))
    b, _ = ram_fiht(observe(X, mask), mask, g, FihtConfig(r=5, variant="RAM"))
    ea, eb = rel_err_unobserved(a, X, mask), rel_err_unobserved(b, X, mask)
    assert ea < 1e-3 and eb < 1e-3


def test_ram_strict_resampling():
    X, mask, g = problem(n_c=30, n=300, r=5, loss=0.2, seed=12)
    _, rec = ram_fiht(
        observe(X, mask), mask, g, FihtConfig(r=5, variant="RAM", strict_resample=True, L=4), truth=X
    )
    assert rec.iterations == 4 and rec.reason == "completed"
    assert rec.extra["p_hat"] == pytest.approx(mask.count // 5 / X.size)
    assert rec.rel_error[-1] < rec.rel_error[0]
    with pytest.raises(ValueError):
        ram_fiht(observe(X, mask), mask, g, FihtConfig(r=5, variant="RAM", strict_resample=True, L=10**6))


def test_ram_noise_error_bound():
    X, mask, g = problem(n_c=30, n=300, r=5, seed=13)
    rng = np.random.default_rng(1)
    N = 1e-3 * np.abs(X).mean() * cplx(rng, *X.shape)
    _, rec = ram_fiht(observe(X + N, mask), mask, g, FihtConfig(r=5, variant="RAM", noise_aware=True))
    err = np.linalg.norm(rec.final_factors.dense() - hankel_lift(X, g))
    HN = np.linalg.norm(hankel_lift(N, g), 2)
    bound = 1e-6 * np.linalg.norm(hankel_lift(X, g)) + 128 * np.sqrt(30) * 300 * np.abs(N).max() + 8 * np.sqrt(5) * HN
    assert err <= bound
    # the bound is loose; the actual error is of the order of the noise itself
    assert err <= 10 * np.linalg.norm(hankel_lift(N, g))


# ---- heavy-ball rate diagnostic ------------------------------------------

def _tiny(seed):
    g = HankelGeometry(2, 24, 12)
    X = gen_spectral(2, 24, 2, seed, min_sep=0.1).data
    return X, sample_mask(2, 24, "M1", 0.3, seed + 10), g


def test_heavy_ball_rates_predict_observed_convergence():
    X, mask, g = _tiny(0)
    rates = heavy_ball_rates(X, mask, g, 2, betas=(0.05,))
    for beta, q in ((0.0, rates.q0), (0.05, rates.q[0.05])):
        cfg = FihtConfig(r=2, beta=beta, tol_rel_change=1e-15, stop_error=1e-13, max_iter=500)
        _, rec = am_fiht(np.where(mask.observed, X, 0), mask, g, cfg, truth=X)
        e = np.array(rec.rel_error)
        k = len(e)
        observed = (e[-1] / e[k // 2]) ** (1 / (k - 1 - k // 2))
        assert observed == pytest.approx(q, rel=0.03)


@pytest.mark.parametrize("seed", range(3))
def test_momentum_below_tau_lowers_the_rate(seed):
    X, mask, g = _tiny(seed)
    rates = heavy_ball_rates(X, mask, g, 2, betas=(0.0,))
    assert rates.q[0.0] == pytest.approx(rates.q0, abs=1e-10)
    assert rates.tau == min(0.2, rates.q0**2) and rates.dim == 2 * (24 + 13 - 2)
    betas = np.linspace(0, rates.tau, 6)[1:-1]
    assert all(q < rates.q0 for q in heavy_ball_rates(X, mask, g, 2, betas=betas).q.values())


def test_heavy_ball_rates_full_observation_and_size_guard():
    X, _, g = _tiny(1)
    assert heavy_ball_rates(X, ObservationMask.full(2, 24), g, 2).q0 < 1e-12
    with pytest.raises(ValueError):
        heavy_ball_rates(X, ObservationMask.full(2, 24), g, 2, max_dim=10)


def test_run_record_keeps_block_loss_draw():
    X = gen_spectral(6, 80, 2, seed=4, min_sep=0.05).data
    mask = sample_mask(6, 80, "M3", 0.2, seed=9)
    _, rec = am_fiht(np.where(mask.observed, X, 0), mask, HankelGeometry(6, 80, 40), FihtConfig(r=2))
    info = rec.extra["mask"]
    assert info["mode"] == "M3" and info["seed"] == 9
    assert info["channels"] == mask.info["channels"] and info["length"] == mask.info["length"]
    assert rec.to_dict()["extra"]["mask"]["start"] == mask.info["start"]


def test_ram_default_mu_is_fixed_and_can_trim():
    g = HankelGeometry(10, 200, 100)
    trimmed = 0
    for seed in range(10):
        X = gen_spectral(10, 200, 5, seed, min_sep=0.01).data
        mask = sample_mask(10, 200, "M1", 0.7, seed + 100)
        X_hat, rec = ram_fiht(np.where(mask.observed, X, 0), mask, g, FihtConfig(r=5, variant="RAM"))
        assert rel_err_unobserved(X_hat, X, mask) < 1e-3
        assert rec.extra["mu"] >= 1
        trimmed += rec.extra["trimmed_iterations"]
    # a mu re-estimated from each iterate would never clip anything
    assert trimmed > 0
