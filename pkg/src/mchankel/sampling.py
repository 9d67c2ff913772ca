"""Observation masks, sparse corruptions and the masking projection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ObservationMask",
    "CorruptionSpec",
    "sample_mask",
    "corrupt",
    "partition",
    "project",
    "MASK_MODES",
    "CORRUPTION_MODES",
]

MASK_MODES = ("M1", "M2", "M3")
CORRUPTION_MODES = ("B1", "B2", "B3")


def _count(frac: float, total: int) -> int:
    # floor that forgives float noise such as 0.09 * 300 = 26.999999999999996
    return int(np.floor(frac * total + 1e-9))


@dataclass(frozen=True)
class ObservationMask:
    """Boolean ``(n_c, n)`` array of observed cells plus how it was drawn."""

    observed: np.ndarray
    mode: str = "custom"
    seed: int | None = None
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=bool)
        if obs.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {obs.shape}")
        obs = obs.copy()
        obs.setflags(write=False)
        object.__setattr__(self, "observed", obs)

    @property
    def shape(self) -> tuple[int, int]:
        return self.observed.shape

    @property
    def count(self) -> int:
        return int(self.observed.sum())

    @property
    def p(self) -> float:
        return self.count / self.observed.size

    @property
    def indices(self) -> np.ndarray:
        """Sorted ``(k, t)`` pairs, 0-based, shape ``(m, 2)``."""
        return np.argwhere(self.observed)

    @classmethod
    def from_indices(cls, indices, shape, mode="custom", seed=None) -> "ObservationMask":
        obs = np.zeros(shape, dtype=bool)
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, 2)
        if idx.size:
            obs[idx[:, 0], idx[:, 1]] = True
        return cls(obs, mode=mode, seed=seed)

    @classmethod
    def full(cls, n_c: int, n: int) -> "ObservationMask":
        return cls(np.ones((n_c, n), dtype=bool), mode="custom")


def sample_mask(n_c: int, n: int, mode: str, loss_fraction: float, seed: int) -> ObservationMask:
    """Draw which cells are observed.

    M1 drops ``floor(loss * n_c * n)`` cells uniformly; M2 drops
    ``floor(loss * n)`` whole columns; M3 drops one contiguous time block on
    ``floor(n_c / 2)`` random channels, sized so the lost fraction matches.
    """
    if not 0 <= loss_fraction < 1:
        raise ValueError(f"loss_fraction must lie in [0, 1), got {loss_fraction}")
    rng = np.random.default_rng(seed)
    obs = np.ones((n_c, n), dtype=bool)
    info: dict = {}
    if mode == "M1":
        lost = rng.choice(n_c * n, _count(loss_fraction, n_c * n), replace=False)
        obs.ravel()[lost] = False
    elif mode == "M2":
        lost = rng.choice(n, _count(loss_fraction, n), replace=False)
        obs[:, lost] = False
    elif mode == "M3":
        half = n_c // 2
        if half < 1:
            raise ValueError("mode M3 needs at least 2 channels")
        length = int(round(loss_fraction * n_c * n / half))
        if length > n:
            raise ValueError(f"loss {loss_fraction} exceeds what half the channels can lose")
        channels = np.sort(rng.choice(n_c, half, replace=False))
        start = int(rng.integers(0, n - length + 1))
        obs[np.ix_(channels, np.arange(start, start + length))] = False
        info = {"channels": channels.tolist(), "start": start, "length": length}
    else:
        raise ValueError(f"unknown mask mode {mode!r}; expected one of {MASK_MODES}")
    return ObservationMask(obs, mode=mode, seed=seed, info=info)


@dataclass(frozen=True)
class CorruptionSpec:
    """Sparse bad-data pattern.

    B1 corrupts ``floor(alpha * n)`` random cells in every row; B2 corrupts
    ``floor(alpha * n)`` random full columns; B3 corrupts that many
    consecutive full columns from a random start.
    """

    mode: str
    alpha: float
    seed: int
    quadrant1: bool = False


def corrupt(X: np.ndarray, spec: CorruptionSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(X + S, S)`` with ``S`` drawn according to ``spec``.

    Nonzeros have magnitude uniform in ``(X_bar, 5 X_bar)`` where
    ``X_bar = ||X||_F / sqrt(n_c n)``, and phase uniform in ``(0, 2 pi)`` or in
    ``(0, pi / 2)`` when ``spec.quadrant1``.
    """
    X = np.asarray(X, dtype=np.complex128)
    n_c, n = X.shape
    if not 0 <= spec.alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {spec.alpha}")
    k = _count(spec.alpha, n)
    S = np.zeros_like(X)
    if spec.alpha == 0:
        return X.copy(), S
    if k < 1:
        raise ValueError(f"alpha={spec.alpha} corrupts nothing for n={n}")
    rng = np.random.default_rng(spec.seed)
    support = np.zeros((n_c, n), dtype=bool)
    if spec.mode == "B1":
        for row in range(n_c):
            support[row, rng.choice(n, k, replace=False)] = True
    elif spec.mode == "B2":
        support[:, rng.choice(n, k, replace=False)] = True
    elif spec.mode == "B3":
        start = int(rng.integers(0, n - k + 1))
        support[:, start : start + k] = True
    else:
        raise ValueError(f"unknown corruption mode {spec.mode!r}; expected one of {CORRUPTION_MODES}")
    x_bar = np.linalg.norm(X) / np.sqrt(n_c * n)
    m = int(support.sum())
    mag = rng.uniform(x_bar, 5 * x_bar, m)
    top = np.pi / 2 if spec.quadrant1 else 2 * np.pi
    S[support] = mag * np.exp(1j * rng.uniform(0, top, m))
    return X + S, S


def partition(mask: ObservationMask, L: int, seed: int = 0) -> list[ObservationMask]:
    """Split ``mask`` into ``L`` disjoint random sub-masks of (near) equal size.

    The first ``|mask| mod L`` subsets get one extra cell.
    """
    if L <= 0:
        raise ValueError(f"L must be positive, got {L}")
    if mask.count < L:
        raise ValueError(f"cannot split {mask.count} observations into {L} sets")
    if L == 1:
        return [mask]
    rng = np.random.default_rng(seed)
    idx = mask.indices[rng.permutation(mask.count)]
    base, extra = divmod(mask.count, L)
    out, start = [], 0
    for i in range(L):
        size = base + (1 if i < extra else 0)
        out.append(ObservationMask.from_indices(idx[start : start + size], mask.shape, mode=mask.mode))
        start += size
    return out


def project(mask: ObservationMask, Z: np.ndarray) -> np.ndarray:
    """Zero the unobserved cells of ``Z``."""
    Z = np.asarray(Z)
    if Z.shape != mask.shape:
        raise ValueError(f"matrix shape {Z.shape} does not match mask shape {mask.shape}")
    return np.where(mask.observed, Z, 0)
