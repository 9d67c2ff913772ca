"""Low-rank Hankel completion by fast iterative hard thresholding.

``am_fiht`` runs projected gradient steps on the lifted matrix with a
heavy-ball term; every gradient step is projected to the tangent space of
the rank-r manifold at the current iterate so the rank-r truncation reduces
to a ``2r x 2r`` SVD.  ``ram_fiht`` adds row-norm trimming of the singular
factors and (optionally) a fresh disjoint sample per iteration.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .hankel_core import (
    HankelGeometry,
    HankelOperator,
    LinearCombination,
    RankRFactors,
    hankel_lift,
    hankel_pinv,
    tangent_project,
    truncate_rank,
)
from .sampling import ObservationMask, partition, project
from .signal_gen import MultiChannelSignal

__all__ = [
    "FihtConfig",
    "RunRecord",
    "am_fiht",
    "ram_fiht",
    "trim",
    "rel_err_unobserved",
    "default_beta",
    "DIVERGENCE_LIMIT",
    "HeavyBallRates",
    "heavy_ball_rates",
]

DIVERGENCE_LIMIT = 1e6
BETA_GUARANTEED = 0.2


def default_beta(p: float) -> float:
    """Heavy-ball weight ``(1 - p)^2 / 5`` used in the experiments."""
    return (1 - p) ** 2 / 5


@dataclass
class FihtConfig:
    r: int
    beta: float | None = None  # None -> default_beta(p)
    max_iter: int = 300
    tol_rel_change: float = 1e-6
    variant: str = "AM"
    mu: float | None = None  # RAM only; None -> incoherence of the initial estimate
    L: int | None = None  # RAM strict mode: number of iterations / partitions - 1
    strict_resample: bool = False
    noise_aware: bool = False
    stop_error: float | None = None  # stop once the full relative error (needs truth) drops below
    seed: int = 0

    def __post_init__(self):
        if self.r < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if self.beta is not None and not 0 <= self.beta < 1:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if self.variant not in ("AM", "RAM"):
            raise ValueError(f"variant must be 'AM' or 'RAM', got {self.variant!r}")
        if self.mu is not None and self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class RunRecord:
    """Per-iteration history and outcome of one solver run."""

    rel_change: list[float] = field(default_factory=list)
    rel_error: list[float] = field(default_factory=list)
    iterations: int = 0
    reason: str = "max_iter"
    wall_time: float = 0.0
    seed: int | None = None
    config: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    final_factors: RankRFactors | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("final_factors")
        return d

    def iterations_to(self, level: float) -> int | None:
        """First iteration (1-based) whose full relative error is <= ``level``."""
        for i, e in enumerate(self.rel_error, start=1):
            if e <= level:
                return i
        return None


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, MultiChannelSignal) else np.asarray(x)


def rel_err_unobserved(X_hat: np.ndarray, X_true: np.ndarray, mask: ObservationMask) -> float:
    """``||P_unobs(X_hat - X)||_F / ||P_unobs(X)||_F``."""
    X_hat, X_true = _as_array(X_hat), _as_array(X_true)
    unobs = ~mask.observed
    if not unobs.any():
        raise ValueError("mask is full; no unobserved entries to score")
    den = np.linalg.norm(X_true[unobs])
    if den == 0:
        raise ValueError("ground truth vanishes on the unobserved entries")
    return float(np.linalg.norm((X_hat - X_true)[unobs]) / den)


def trim(factors: RankRFactors, mu: float, geom: HankelGeometry):
    """Clip row norms of ``U`` to ``sqrt(mu r / (n_c n_1))`` and of ``V`` to ``sqrt(mu r / n_2)``.

    Returns ``(A, s, B)``.  When no row exceeds its cap the original ``U`` and
    ``V`` arrays are returned unchanged (same objects).
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    r = factors.rank

    def clip(M, cap):
        norms = np.linalg.norm(M, axis=1)
        over = norms > cap
        if not over.any():
            return M
        scale = np.ones_like(norms)
        scale[over] = cap / norms[over]
        return M * scale[:, None]

    A = clip(factors.U, np.sqrt(mu * r / (geom.n_c * geom.n_1)))
    B = clip(factors.V, np.sqrt(mu * r / geom.n_2))
    return A, factors.s, B


def _factor_incoherence(L: RankRFactors) -> float:
    r = max(L.rank, 1)
    mu_u = np.max(np.sum(np.abs(L.U) ** 2, axis=1)) * L.U.shape[0] / r
    mu_v = np.max(np.sum(np.abs(L.V) ** 2, axis=1)) * L.V.shape[0] / r
    return float(max(mu_u, mu_v))


def _resvd(A, s, B) -> RankRFactors:
    # thin SVD of A diag(s) B^H from QR of the tall factors
    Qa, Ra = np.linalg.qr(A)
    Qb, Rb = np.linalg.qr(B)
    Uc, sc, Vch = np.linalg.svd((Ra * s) @ Rb.conj().T)
    return RankRFactors(Qa @ Uc, sc, Qb @ Vch.conj().T)


def mask_summary(mask: ObservationMask) -> dict:
    """Mode, seed, observed fraction and mode-specific draws (M3 channels and block)."""
    return {"mode": mask.mode, "seed": mask.seed, "p": mask.p, **mask.info}


def _obs_norm(mask, Z):
    return float(np.linalg.norm(Z[mask.observed]))


class _Monitor:
    """Shared bookkeeping for termination, divergence and history."""

    def __init__(self, M, mask, config, truth):
        self.M, self.mask, self.config = M, mask, config
        self.truth = None if truth is None else _as_array(truth)
        self.truth_norm = None if self.truth is None else np.linalg.norm(self.truth)
        self.obs_norm = _obs_norm(mask, M) or 1.0
        self.record = RunRecord(seed=config.seed, config=asdict(config))
        self.record.extra["mask"] = mask_summary(mask)
        self._stall = 0

    def step(self, X_old, X_new) -> str | None:
        rec = self.record
        rec.iterations += 1
        if not np.all(np.isfinite(X_new)):
            rec.rel_change.append(float("inf"))
            if self.truth is not None:
                rec.rel_error.append(float("inf"))
            return "diverged"
        den = _obs_norm(self.mask, X_old)
        num = _obs_norm(self.mask, X_new - X_old)
        change = num / den if den > 0 else (0.0 if num == 0 else float("inf"))
        rec.rel_change.append(change)
        if self.truth is not None:
            rec.rel_error.append(float(np.linalg.norm(X_new - self.truth) / self.truth_norm))
        resid = _obs_norm(self.mask, self.M - X_new) / self.obs_norm
        if resid > DIVERGENCE_LIMIT:
            return "diverged"
        if change <= self.config.tol_rel_change:
            return "tol"
        if self.config.stop_error is not None and rec.rel_error and rec.rel_error[-1] <= self.config.stop_error:
            return "target"
        if self.config.noise_aware and len(rec.rel_change) > 1:
            self._stall = self._stall + 1 if change >= rec.rel_change[-2] else 0
            if self._stall >= 5:
                return "stalled"
        return None


def _check_inputs(observed, mask, geom):
    M = geom.check_signal(_as_array(observed))
    if mask.shape != M.shape:
        raise ValueError(f"mask shape {mask.shape} does not match data shape {M.shape}")
    if mask.count == 0:
        raise ValueError("mask has no observed entries")
    return project(mask, M)


def am_fiht(observed, mask: ObservationMask, geom: HankelGeometry, config: FihtConfig, truth=None):
    """Recover a multi-channel signal from its observed entries.

    Returns ``(MultiChannelSignal, RunRecord)``.  ``truth``, when given, only
    feeds the per-iteration error history.
    """
    t0 = time.perf_counter()
    M = _check_inputs(observed, mask, geom)
    p = mask.p
    beta = default_beta(p) if config.beta is None else config.beta
    mon = _Monitor(M, mask, config, truth)
    mon.record.extra["beta"] = beta
    mon.record.extra["p"] = p
    if beta >= BETA_GUARANTEED:
        mon.record.flags.append("beta_outside_guarantee")

    W_prev1 = HankelOperator(M / p, geom)
    W_prev2 = None
    L = truncate_rank(W_prev1, config.r)
    X = hankel_pinv(L, geom)
    reason = "max_iter"
    for _ in range(config.max_iter):
        G = project(mask, M - X)
        terms = [(1.0, HankelOperator(X + G / p, geom))]
        if beta:
            terms.append((beta, W_prev1))
            if W_prev2 is not None:
                terms.append((-beta, W_prev2))
        W = tangent_project(L, LinearCombination(terms))
        if not np.all(np.isfinite(W.core)):
            mon.record.iterations += 1
            reason = "diverged"
            break
        L = truncate_rank(W, min(config.r, W.core.shape[0]))
        X_new = hankel_pinv(L, geom)
        W_prev2, W_prev1 = W_prev1, W
        status = mon.step(X, X_new)
        if status == "diverged" and not np.all(np.isfinite(X_new)):
            reason = status
            break
        X = X_new
        if status:
            reason = status
            break
    rec = mon.record
    rec.reason = reason
    rec.final_factors = L
    rec.wall_time = time.perf_counter() - t0
    return MultiChannelSignal(X), rec


def ram_fiht(observed, mask: ObservationMask, geom: HankelGeometry, config: FihtConfig, truth=None):
    """AM-FIHT with incoherence trimming and optional disjoint resampling.

    In the default (practice) mode every iteration uses the full mask and
    stops on the same criteria as :func:`am_fiht`.  With
    ``config.strict_resample`` the mask is split into ``L + 1`` disjoint sets,
    iteration ``l`` uses set ``l + 1`` and exactly ``L`` iterations are run.
    """
    t0 = time.perf_counter()
    M = _check_inputs(observed, mask, geom)
    n_total = geom.n_c * geom.n
    if config.strict_resample:
        n_iter = config.L if config.L is not None else config.max_iter
        if n_iter < 1:
            raise ValueError("L must be >= 1")
        if mask.count < n_iter + 1:
            raise ValueError(f"{mask.count} observations cannot feed {n_iter + 1} partitions")
        parts = partition(mask, n_iter + 1, seed=config.seed)
        m_hat = min(q.count for q in parts)
        p_hat = m_hat / n_total
    else:
        n_iter = config.max_iter
        parts = None
        p_hat = mask.p

    def part(i):
        return mask if parts is None else parts[i]

    beta = default_beta(mask.p) if config.beta is None else config.beta
    mon = _Monitor(M, mask, config, truth)
    rec = mon.record
    rec.extra.update(beta=beta, p=mask.p, p_hat=p_hat, strict=config.strict_resample)
    if beta >= BETA_GUARANTEED:
        rec.flags.append("beta_outside_guarantee")

    W_prev1 = HankelOperator(project(part(0), M) / p_hat, geom)
    W_prev2 = None
    L = truncate_rank(W_prev1, config.r)
    X = hankel_pinv(L, geom)
    # without a supplied bound, the spectral initialisation fixes mu for the whole run
    mu = config.mu if config.mu is not None else _factor_incoherence(L)
    rec.extra["mu"] = mu
    reason = "max_iter"
    clipped = 0
    for l in range(n_iter):
        A, s, B = trim(L, mu, geom)
        if A is L.U and B is L.V:
            L_trim = L
        else:
            clipped += 1
            L_trim = _resvd(A, s, B)
        X_hat = hankel_pinv(L_trim, geom)
        G = project(part(l + 1), M - X_hat)
        terms = [(1.0, HankelOperator(X_hat + G / p_hat, geom))]
        if beta:
            terms.append((beta, W_prev1))
            if W_prev2 is not None:
                terms.append((-beta, W_prev2))
        W = tangent_project(L_trim, LinearCombination(terms))
        if not np.all(np.isfinite(W.core)):
            rec.iterations += 1
            reason = "diverged"
            break
        L = truncate_rank(W, min(config.r, W.core.shape[0]))
        X_new = hankel_pinv(L, geom)
        W_prev2, W_prev1 = W_prev1, W
        status = mon.step(X, X_new)
        if status == "diverged" and not np.all(np.isfinite(X_new)):
            reason = status
            break
        X = X_new
        if status and not (config.strict_resample and status in ("tol", "stalled")):
            reason = status
            break
    else:
        if config.strict_resample:
            reason = "completed"
    rec.reason = reason
    rec.extra["trimmed_iterations"] = clipped
    rec.final_factors = L
    rec.wall_time = time.perf_counter() - t0
    return MultiChannelSignal(X), rec


# ---- heavy-ball rate diagnostic ------------------------------------------

@dataclass
class HeavyBallRates:
    """Local rates of the linearised iteration around the truth."""

    q0: float  # spectral radius without momentum
    tau: float  # min(1/5, q0^2): momentum weights in (0, tau) are guaranteed to help
    q: dict  # beta -> spectral radius with momentum
    dim: int  # tangent-space dimension


def heavy_ball_rates(X, mask: ObservationMask, geom: HankelGeometry, r: int, betas=(), max_dim: int = 1500):
    """Dense spectral radii of the error recursion linearised at ``X``.

    Without momentum the lifted error follows ``e <- L e`` with
    ``L = P_S G (I - P_mask / p) G^* P_S``; ``G`` is the lift with unit-norm
    anti-diagonal basis and ``P_S`` the tangent projection at the rank-``r``
    lift of ``X``.  With momentum the pair ``(e_l, e_{l-1})`` follows
    ``[[L + beta I, -beta I], [I, 0]]``.  Cost is cubic in the tangent
    dimension, so only tiny instances are accepted.
    """
    X = geom.check_signal(_as_array(X))
    n_c, n, n_1, n_2 = geom.n_c, geom.n, geom.n_1, geom.n_2
    m = n_c * n_1
    dim = r * (m + n_2 - r)
    if dim > max_dim:
        raise ValueError(f"tangent dimension {dim} exceeds max_dim={max_dim}")

    # columns of G: lifts of unit cells scaled by 1/sqrt(w_t)
    G = np.zeros((m * n_2, n_c * n), dtype=complex)
    for t in range(n):
        for i in range(max(0, t - n_2 + 1), min(n_1, t + 1)):
            for k in range(n_c):
                G[(i * n_c + k) * n_2 + (t - i), k * n + t] = 1 / np.sqrt(geom.weights[t])

    U, _, Vh = np.linalg.svd(hankel_lift(X, geom), full_matrices=False)
    U, V = U[:, :r], Vh[:r].conj().T
    # orthonormal basis of the tangent space {U A^H + B V^H}
    Uc = np.linalg.svd(np.eye(m) - U @ U.conj().T)[0][:, : m - r]
    Vc = np.linalg.svd(np.eye(n_2) - V @ V.conj().T)[0][:, : n_2 - r]
    blocks = [np.kron(U, V.conj()), np.kron(Uc, V.conj()), np.kron(U, Vc.conj())]
    Q = np.hstack(blocks)  # row-major vec of U A V^H is kron(U, conj V) vec(A)

    p = mask.p
    d = 1.0 - mask.observed.reshape(-1).astype(float) / p
    GQ = G.conj().T @ Q
    L = GQ.conj().T @ (d[:, None] * GQ)
    eta = np.linalg.eigvalsh((L + L.conj().T) / 2)
    q0 = float(np.max(np.abs(eta)))

    q = {}
    eye = np.eye(dim)
    for beta in betas:
        T = np.block([[L + beta * eye, -beta * eye], [eye, np.zeros_like(eye)]])
        q[float(beta)] = float(np.max(np.abs(np.linalg.eigvals(T))))
    return HeavyBallRates(q0=q0, tau=min(0.2, q0**2), q=q, dim=dim)
