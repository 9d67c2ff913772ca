"""Structured alternating projections (SAP) for robust Hankel completion.

The observations carry sparse gross errors.  Each inner iteration removes
entries of the observed residual above a threshold, takes a gradient step,
and projects the lifted result onto rank ``k``.  The outer loop grows ``k``
from 1 to ``r`` so that corruptions large compared to the dominant modes
are removed before the weak modes are fitted.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .completion import DIVERGENCE_LIMIT, RunRecord, _as_array, mask_summary
from .hankel_core import HankelGeometry, HankelOperator, hankel_pinv, partial_svd
from .sampling import ObservationMask, partition, project
from .signal_gen import MultiChannelSignal

__all__ = [
    "SapConfig",
    "SparseEstimate",
    "hard_threshold",
    "estimate_sigma1",
    "eta_default",
    "eta_theory",
    "inner_iterations",
    "sap",
]


def eta_default(r: int, geom: HankelGeometry) -> float:
    """Practical threshold coefficient ``r / sqrt(n_c n_1 n_2)``."""
    return r / math.sqrt(geom.n_c * geom.n_1 * geom.n_2)


def eta_theory(r: int, geom: HankelGeometry, mu: float) -> float:
    """Threshold coefficient ``4 mu c_s r / (sqrt(n_c) n)`` with ``c_s = max(n/n_1, n/n_2)``."""
    c_s = max(geom.n / geom.n_1, geom.n / geom.n_2)
    return 4 * mu * c_s * r / (math.sqrt(geom.n_c) * geom.n)


def inner_iterations(eta: float, sigma1: float, epsilon: float, geom: HankelGeometry) -> int:
    """``ceil(ln(eta sqrt(n_c) n sigma1 / epsilon))``, at least 1."""
    arg = eta * math.sqrt(geom.n_c) * geom.n * sigma1 / epsilon
    return max(1, math.ceil(math.log(arg))) if arg > 1 else 1


@dataclass
class SapConfig:
    r: int
    epsilon: float = 1e-3
    eta: float | None = None  # None -> eta_default(r, geom)
    sigma1: float | None = None  # None -> estimate_sigma1 on the observations
    T: int | None = None  # inner iterations; None -> formula (strict) or max_inner (practice)
    max_inner: int = 200
    inner_tol: float = 1e-3
    refine_last: bool = True  # at k = r skip the change exit and test the return rule every step
    floor_support: bool = True  # report T_max(xi, epsilon) of the final residual instead of the last S_t
    stall_window: int = 10  # leave a stage whose change has not shrunk over this many steps; 0 disables
    xi_decay: float = 0.8  # xi = eta (sigma_{k+1} + xi_decay^t sigma_k); 0.5 shrinks faster than the error at moderate sampling
    strict_partition: bool = False
    eta_mode: str = "practice"  # or "theory", which needs mu
    mu: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.r < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.eta is not None and self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.stall_window < 0:
            raise ValueError(f"stall_window must be >= 0, got {self.stall_window}")
        if not 0 < self.xi_decay < 1:
            raise ValueError(f"xi_decay must lie in (0, 1), got {self.xi_decay}")
        if self.eta_mode not in ("practice", "theory"):
            raise ValueError(f"eta_mode must be 'practice' or 'theory', got {self.eta_mode!r}")
        if self.eta_mode == "theory" and self.eta is None and self.mu is None:
            raise ValueError("eta_mode='theory' needs mu")


@dataclass(frozen=True)
class SparseEstimate:
    """Estimated sparse errors on the observed cells."""

    support: np.ndarray  # boolean (n_c, n)
    values: np.ndarray  # dense (n_c, n), zero off the support

    @property
    def indices(self) -> np.ndarray:
        return np.argwhere(self.support)

    @property
    def count(self) -> int:
        return int(self.support.sum())


def hard_threshold(Z: np.ndarray, xi: float) -> SparseEstimate:
    """Keep entries with ``|Z_ij| >= xi``."""
    Z = np.asarray(Z)
    if xi < 0:
        raise ValueError(f"threshold must be non-negative, got {xi}")
    keep = np.abs(Z) >= xi
    if xi == 0:
        keep = np.ones(Z.shape, dtype=bool)
    return SparseEstimate(keep, np.where(keep, Z, 0))


def estimate_sigma1(observed, mask: ObservationMask, geom: HankelGeometry) -> float:
    """Top singular value of ``p^{-1} H(P_mask(M))``."""
    if mask.count == 0:
        raise ValueError("mask has no observed entries")
    M = project(mask, geom.check_signal(_as_array(observed)))
    if not np.any(M):
        return 0.0
    f = partial_svd(HankelOperator(M / mask.p, geom), 1)
    return float(f.s[0]) if f.rank else 0.0


def _top_singular(W: HankelOperator, k: int):
    cap = min(W.shape)
    f = partial_svd(W, min(k + 1, cap))
    s = np.zeros(k + 1)
    s[: f.rank] = f.s
    return f.truncate(min(k, f.rank)), s[k - 1], s[k]


def sap(observed, mask: ObservationMask, geom: HankelGeometry, config: SapConfig, truth=None):
    """Recover ``X`` and the sparse errors from ``P_mask(X + S)``.

    Returns ``(MultiChannelSignal, SparseEstimate, RunRecord)``.  The record's
    ``extra`` holds the threshold sequence, per-stage iteration counts and
    ``sigma_next`` (``sigma_{k+1}`` of the last lifted update in each stage).

    With ``floor_support`` the returned estimate thresholds the final observed
    residual at ``max(xi, epsilon)``; ``extra["support_literal"]`` keeps the
    support size of the last inner thresholding step.
    """
    t0 = time.perf_counter()
    M = project(mask, geom.check_signal(_as_array(observed)))
    if mask.count == 0:
        raise ValueError("mask has no observed entries")
    n_total = geom.n_c * geom.n
    r = config.r
    if r > min(geom.shape):
        raise ValueError(f"rank {r} exceeds lift capacity {min(geom.shape)}")

    if config.eta is not None:
        eta = config.eta
    elif config.eta_mode == "theory":
        eta = eta_theory(r, geom, config.mu)
    else:
        eta = eta_default(r, geom)
    sigma1 = config.sigma1 if config.sigma1 is not None else estimate_sigma1(M, mask, geom)
    if config.T is not None:
        T = config.T
    elif config.strict_partition:
        T = inner_iterations(eta, sigma1, config.epsilon, geom)
    else:
        T = config.max_inner - 1

    if config.strict_partition:
        parts = partition(mask, r * (T + 1), seed=config.seed)
        p_hat = min(q.count for q in parts) / n_total
    else:
        parts = None
        p_hat = mask.p

    truth_arr = None if truth is None else _as_array(truth)
    rec = RunRecord(seed=config.seed, config=asdict(config))
    rec.extra["mask"] = mask_summary(mask)
    rec.extra.update(eta=eta, sigma1=sigma1, T=T, p_hat=p_hat, xi=[], stage_iters=[], sigma_next=[], stalled_stages=[])
    obs_norm = float(np.linalg.norm(M[mask.observed])) or 1.0
    stop_level = config.epsilon / (math.sqrt(geom.n_c) * geom.n)

    refine_last = config.refine_last and not config.strict_partition
    X = np.zeros_like(M)
    xi = eta * sigma1
    S = hard_threshold(np.zeros_like(M), np.inf)
    reason = "max_stage"
    diverged = False
    for k in range(1, r + 1):
        sig_next = 0.0
        inner = 0
        changes: list[float] = []
        for t in range(T + 1):
            omega = mask if parts is None else parts[(k - 1) * (T + 1) + t]
            R = project(omega, M - X)
            S = hard_threshold(R, xi)
            S = SparseEstimate(S.support & omega.observed, S.values)
            W = HankelOperator(X + (R - S.values) / p_hat, geom)
            L, sig_k, sig_next = _top_singular(W, k)
            xi = eta * (sig_next + config.xi_decay**t * sig_k)
            X_new = hankel_pinv(L, geom)
            inner += 1
            rec.iterations += 1
            rec.extra["xi"].append(xi)
            den = float(np.linalg.norm(X[mask.observed]))
            num = float(np.linalg.norm((X_new - X)[mask.observed]))
            change = num / den if den > 0 else float("inf")
            rec.rel_change.append(change)
            if truth_arr is not None:
                rec.rel_error.append(
                    float(np.linalg.norm(X_new - truth_arr) / np.linalg.norm(truth_arr))
                )
            if not np.all(np.isfinite(X_new)):
                diverged = True
                break
            X = X_new
            resid = float(np.linalg.norm((M - X)[mask.observed])) / obs_norm
            if resid > DIVERGENCE_LIMIT:
                diverged = True
                break
            if refine_last and k == r:
                if eta * sig_next <= stop_level:
                    break
            elif change <= config.inner_tol:
                break
            changes.append(change)
            w = config.stall_window
            if w and len(changes) > 2 * w and change >= 0.9 * changes[-1 - w]:
                rec.extra["stalled_stages"].append(k)
                break
        rec.extra["stage_iters"].append(inner)
        rec.extra["sigma_next"].append(sig_next)
        if diverged:
            reason = "diverged"
            break
        if eta * sig_next <= stop_level:
            reason = "converged"
            break
    rec.extra["support_literal"] = S.count
    if config.floor_support and not diverged:
        # residual entries below the certified accuracy are not declared corrupted
        S = hard_threshold(project(mask, M - X), max(xi, config.epsilon))
    if reason == "max_stage":
        rec.flags.append("termination_criterion_not_met")
    rec.extra["stages"] = len(rec.extra["stage_iters"])
    rec.reason = reason
    rec.wall_time = time.perf_counter() - t0
    return MultiChannelSignal(X), S, rec
