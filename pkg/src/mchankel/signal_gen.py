"""Ground-truth signals whose block Hankel lift is low rank.

Two generators: sums of damped complex sinusoids shared across channels,
and outputs of a linear dynamical system ``s_{t+1} = A s_t, x_t = C s_t``.
Both are deterministic in their seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hankel_core import SIGMA_RTOL, HankelGeometry, hankel_lift

__all__ = [
    "SpectralParams",
    "LdsParams",
    "MultiChannelSignal",
    "spectral_signal",
    "gen_spectral",
    "gen_lds",
    "incoherence",
    "channel_incoherence",
    "detect_rank",
    "condition_number",
    "lift_rank_gap",
    "RankDetectionError",
    "RANK_GAP",
]

RANK_GAP = 1e6
MAX_FREQ_ATTEMPTS = 1000


class RankDetectionError(ValueError):
    """The lift has no clear singular-value gap at the requested rank."""


@dataclass(frozen=True)
class SpectralParams:
    f: np.ndarray
    tau: np.ndarray
    D: np.ndarray

    @property
    def r(self) -> int:
        return self.f.shape[0]

    def to_dict(self) -> dict:
        return {
            "f": self.f.tolist(),
            "tau": self.tau.tolist(),
            "D_re": self.D.real.tolist(),
            "D_im": self.D.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralParams":
        D = np.asarray(d["D_re"], dtype=float) + 1j * np.asarray(d["D_im"], dtype=float)
        return cls(np.asarray(d["f"], dtype=float), np.asarray(d["tau"], dtype=float), D)


@dataclass(frozen=True)
class LdsParams:
    A: np.ndarray
    C: np.ndarray
    s1: np.ndarray

    def __post_init__(self):
        n_p = self.A.shape[0]
        if self.A.shape != (n_p, n_p) or self.C.ndim != 2 or self.C.shape[1] != n_p:
            raise ValueError(f"inconsistent LDS shapes A{self.A.shape}, C{self.C.shape}")
        if np.shape(self.s1) != (n_p,):
            raise ValueError(f"s1 has shape {np.shape(self.s1)}, expected ({n_p},)")


@dataclass
class MultiChannelSignal:
    """An ``n_c x n`` complex data matrix with optional generating parameters."""

    data: np.ndarray
    params: SpectralParams | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=np.complex128))
        if not np.all(np.isfinite(self.data)):
            raise ValueError("signal has non-finite entries")

    @property
    def n_c(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]


def spectral_signal(params: SpectralParams, n: int) -> np.ndarray:
    """``X[k, t] = sum_i D[k, i] exp((2 pi i f_i - tau_i) t)`` for ``t = 1..n``."""
    t = np.arange(1, n + 1)
    modes = np.exp(np.outer(2j * np.pi * params.f - params.tau, t))  # (r, n)
    return params.D @ modes


def _wrap_sep(f: np.ndarray) -> float:
    if f.size < 2:
        return 1.0
    d = np.abs(f[:, None] - f[None, :])
    d = np.minimum(d, 1 - d)
    return float(d[~np.eye(f.size, dtype=bool)].min())


def _draw_frequencies(rng, r, min_sep):
    if min_sep is None:
        return rng.uniform(0, 1, r)
    if min_sep * r >= 1:
        raise ValueError(f"min_sep={min_sep} infeasible for r={r}")
    for _ in range(MAX_FREQ_ATTEMPTS):
        f = rng.uniform(0, 1, r)
        if _wrap_sep(f) >= min_sep:
            return f
    raise ValueError(f"no frequency draw met min_sep={min_sep} in {MAX_FREQ_ATTEMPTS} attempts")


def gen_spectral(
    n_c: int,
    n: int,
    r: int,
    seed: int,
    damped: bool = False,
    min_sep: float | None = None,
    amp_exponent: float = 1.0,
    boost_first: float = 1.0,
) -> MultiChannelSignal:
    """Random spectrally sparse signal shared across ``n_c`` channels.

    Frequencies are uniform on (0, 1); amplitudes have uniform phase and
    magnitude ``1 + 10**(amp_exponent * a)`` with ``a ~ U(0, 1)``.  Dampings
    are drawn from (0, 0.02) when ``damped``.  ``boost_first`` multiplies the
    first mode in every channel, which inflates the lift's condition number.
    """
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    if n < 2 * r:
        raise ValueError(f"n={n} too short for r={r} modes (need n >= 2r)")
    rng = np.random.default_rng(seed)
    f = _draw_frequencies(rng, r, min_sep)
    tau = rng.uniform(0, 0.02, r) if damped else np.zeros(r)
    a = rng.uniform(0, 1, (n_c, r))
    phase = rng.uniform(0, 2 * np.pi, (n_c, r))
    D = (1 + 10 ** (amp_exponent * a)) * np.exp(1j * phase)
    D[:, 0] *= boost_first
    params = SpectralParams(f, tau, D)
    return MultiChannelSignal(spectral_signal(params, n), params=params, seed=seed)


def gen_lds(params: LdsParams, n: int) -> MultiChannelSignal:
    """Outputs ``x_t = C A^{t-1} s_1`` for ``t = 1..n``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    A = np.asarray(params.A, dtype=np.complex128)
    C = np.asarray(params.C, dtype=np.complex128)
    s = np.asarray(params.s1, dtype=np.complex128)
    out = np.empty((C.shape[0], n), dtype=np.complex128)
    for t in range(n):
        out[:, t] = C @ s
        s = A @ s
    return MultiChannelSignal(out)


def _lift_svd(X, geom, r):
    U, s, Vh = np.linalg.svd(hankel_lift(X, geom), full_matrices=False)
    if r > s.size:
        raise RankDetectionError(f"rank {r} exceeds lift capacity {s.size}")
    tail = s[r] if r < s.size else 0.0
    if s[r - 1] == 0 or tail * RANK_GAP > s[r - 1]:
        raise RankDetectionError(
            f"no singular gap at rank {r}: sigma_r={s[r - 1]:.3e}, sigma_r+1={tail:.3e}"
        )
    return U[:, :r], s, Vh[:r].conj().T


def lift_rank_gap(X: np.ndarray, geom: HankelGeometry, r: int) -> float:
    """``sigma_{r+1} / sigma_r`` of the lift (0 when the lift has exactly r columns)."""
    s = np.linalg.svd(hankel_lift(X, geom), compute_uv=False)
    return float(s[r] / s[r - 1]) if r < s.size else 0.0


def _data(X):
    return X.data if isinstance(X, MultiChannelSignal) else np.asarray(X)


def detect_rank(X, geom: HankelGeometry) -> int:
    """Numerical rank of the lift: position of the largest spectral drop if it exceeds ``RANK_GAP``."""
    s = np.linalg.svd(hankel_lift(_data(X), geom), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        raise RankDetectionError("lift is zero")
    if s.size == 1:
        return 1
    # round-off tails are flattened so ratios among them cannot win
    s = np.maximum(s, s[0] * SIGMA_RTOL)
    drops = s[:-1] / s[1:]
    k = int(np.argmax(drops))
    # no clear drop anywhere: the lift is full rank
    return k + 1 if drops[k] > RANK_GAP else s.size


def incoherence(X, geom: HankelGeometry, r: int | None = None) -> tuple[float, float, float]:
    """Incoherence of the rank-``r`` lift as ``(mu, mu_U, mu_V)``.

    ``mu_U = max_i ||e_i^H U||^2 * n_c n_1 / r`` and likewise for ``V`` with
    ``n_2``; ``mu`` is the larger of the two.  ``r`` defaults to
    :func:`detect_rank`; either way the gap test must pass.
    """
    if r is None:
        r = detect_rank(X, geom)
    U, _, V = _lift_svd(_data(X), geom, r)
    mu_u = float(np.max(np.sum(np.abs(U) ** 2, axis=1)) * U.shape[0] / r)
    mu_v = float(np.max(np.sum(np.abs(V) ** 2, axis=1)) * V.shape[0] / r)
    return max(mu_u, mu_v), mu_u, mu_v


def channel_incoherence(X, geom: HankelGeometry, r: int | None = None) -> float:
    """``max_k mu`` over the single-channel lifts of the rows of ``X``."""
    X = geom.check_signal(_data(X))
    single = HankelGeometry(1, geom.n, geom.n_1)
    return max(incoherence(X[k : k + 1], single, r)[0] for k in range(geom.n_c))


def condition_number(X, geom: HankelGeometry, r: int) -> float:
    """``sigma_1 / sigma_r`` of the lift."""
    _, s, _ = _lift_svd(_data(X), geom, r)
    return float(s[0] / s[r - 1])
