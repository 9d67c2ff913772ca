"""Block Hankel operator algebra.

A multi-channel signal ``X`` of shape ``(n_c, n)`` is lifted to the block
Hankel matrix ``H(X)`` of shape ``(n_c * n_1, n_2)`` whose ``(i, j)`` block is
the column ``x_{i+j-1}``.  Row ``(k1 - 1) * n_c + k`` of the lift holds channel
``k`` of block row ``k1``.

Everything here is complex128.  Structured paths (FFT products, factored
pseudoinverse, tangent-space truncation) all have a dense reference
counterpart that the tests compare against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "HankelGeometry",
    "RankRFactors",
    "TangentMatrix",
    "HankelOperator",
    "LinearCombination",
    "anti_diag_weights",
    "hankel_lift",
    "hankel_pinv",
    "hankel_matvec",
    "hankel_rmatvec",
    "tangent_project",
    "truncate_rank",
    "partial_svd",
    "lanczos_svd",
    "DENSE_SVD_MAX",
    "SIGMA_RTOL",
]

# Lanczos is used above this many lifted entries; below it a dense SVD is cheaper.
DENSE_SVD_MAX = 2**16
# Singular values below SIGMA_RTOL * sigma_1 are treated as zero.
SIGMA_RTOL = 1e-14


def anti_diag_weights(n_1: int, n_2: int) -> np.ndarray:
    """Number of cells on each anti-diagonal of an ``n_1 x n_2`` matrix.

    >>> anti_diag_weights(2, 3).tolist()
    [1, 2, 2, 1]
    """
    if n_1 < 1 or n_2 < 1:
        raise ValueError(f"n_1 and n_2 must be >= 1, got ({n_1}, {n_2})")
    n = n_1 + n_2 - 1
    t = np.arange(1, n + 1)
    return np.minimum.reduce([t, np.full(n, n_1), np.full(n, n_2), n + 1 - t]).astype(np.int64)


def _next_pow2(m: int) -> int:
    return 1 << max(0, int(m - 1).bit_length())


@dataclass(frozen=True)
class HankelGeometry:
    """Shape of the lift: ``n_c`` channels, length ``n``, ``n_1`` block rows."""

    n_c: int
    n: int
    n_1: int
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_c < 1:
            raise ValueError(f"n_c must be >= 1, got {self.n_c}")
        if not 1 <= self.n_1 <= self.n:
            raise ValueError(f"n_1 must lie in [1, n={self.n}], got {self.n_1}")
        w = anti_diag_weights(self.n_1, self.n_2)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def square(cls, n_c: int, n: int) -> "HankelGeometry":
        """Geometry with ``n_1 = n // 2`` (the near-square lift used in experiments)."""
        return cls(n_c, n, max(1, n // 2))

    @property
    def n_2(self) -> int:
        return self.n + 1 - self.n_1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_c * self.n_1, self.n_2)

    @property
    def nfft(self) -> int:
        return _next_pow2(self.n_1 + self.n_2 - 1)

    @property
    def size(self) -> int:
        return self.n_c * self.n_1 * self.n_2

    def check_signal(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        if X.ndim == 1 and self.n_c == 1:
            X = X[None, :]
        if X.shape != (self.n_c, self.n):
            raise ValueError(f"signal shape {X.shape} does not match ({self.n_c}, {self.n})")
        return X.astype(np.complex128, copy=False)


def hankel_lift(X: np.ndarray, geom: HankelGeometry) -> np.ndarray:
    """Dense block Hankel matrix of ``X`` (reference implementation)."""
    X = geom.check_signal(X)
    windows = sliding_window_view(X, geom.n_2, axis=1)  # (n_c, n_1, n_2)
    return np.ascontiguousarray(windows.transpose(1, 0, 2)).reshape(geom.shape)


@dataclass(frozen=True)
class RankRFactors:
    """Thin SVD ``U diag(s) V^H`` of a lifted matrix."""

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return self.s.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.U.shape[0], self.V.shape[0])

    def dense(self) -> np.ndarray:
        return (self.U * self.s) @ self.V.conj().T

    def right_mul(self, M: np.ndarray) -> np.ndarray:
        return self.U @ (self.s[:, None] * (self.V.conj().T @ M))

    def left_mul_h(self, M: np.ndarray) -> np.ndarray:
        return self.V @ (self.s[:, None] * (self.U.conj().T @ M))

    def truncate(self, r: int) -> "RankRFactors":
        return RankRFactors(self.U[:, :r], self.s[:r], self.V[:, :r])


@dataclass(frozen=True)
class TangentMatrix:
    """A matrix ``left @ core @ right^H`` with orthonormal ``left`` and ``right``.

    Produced by :func:`tangent_project`; rank is at most ``2r``.
    """

    left: np.ndarray
    core: np.ndarray
    right: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (self.left.shape[0], self.right.shape[0])

    def dense(self) -> np.ndarray:
        return self.left @ self.core @ self.right.conj().T

    def right_mul(self, M: np.ndarray) -> np.ndarray:
        return self.left @ (self.core @ (self.right.conj().T @ M))

    def left_mul_h(self, M: np.ndarray) -> np.ndarray:
        return self.right @ (self.core.conj().T @ (self.left.conj().T @ M))


class HankelOperator:
    """Matrix-free ``H(X)`` with FFT-based products.

    The channel spectra are computed once, so repeated products (Lanczos,
    tangent projections) cost ``O(n_c n log n)`` per vector.
    """

    def __init__(self, X: np.ndarray, geom: HankelGeometry):
        self.geom = geom
        self.X = geom.check_signal(X)
        self._fx = np.fft.fft(self.X, geom.nfft, axis=1)  # (n_c, nfft)

    @property
    def shape(self) -> tuple[int, int]:
        return self.geom.shape

    def dense(self) -> np.ndarray:
        return hankel_lift(self.X, self.geom)

    def matmat(self, V: np.ndarray) -> np.ndarray:
        g = self.geom
        V = np.asarray(V, dtype=np.complex128)
        if V.shape[0] != g.n_2:
            raise ValueError(f"operand has {V.shape[0]} rows, expected n_2={g.n_2}")
        fv = np.fft.fft(V[::-1], g.nfft, axis=0)  # (nfft, q)
        prod = np.fft.ifft(self._fx[:, :, None] * fv[None, :, :], axis=1)
        out = prod[:, g.n_2 - 1 : g.n_2 - 1 + g.n_1, :]  # (n_c, n_1, q)
        return out.transpose(1, 0, 2).reshape(g.n_c * g.n_1, -1)

    def rmatmat(self, U: np.ndarray) -> np.ndarray:
        g = self.geom
        U = np.asarray(U, dtype=np.complex128)
        if U.shape[0] != g.n_c * g.n_1:
            raise ValueError(f"operand has {U.shape[0]} rows, expected n_c*n_1={g.n_c * g.n_1}")
        q = U.shape[1]
        blocks = U.reshape(g.n_1, g.n_c, q).conj()[::-1]  # reversed in block-row index
        fu = np.fft.fft(blocks, g.nfft, axis=0)  # (nfft, n_c, q)
        prod = np.einsum("kf,fkq->fq", self._fx, fu)
        out = np.fft.ifft(prod, axis=0)[g.n_1 - 1 : g.n_1 - 1 + g.n_2]
        return out.conj()

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matmat(np.asarray(v).reshape(-1, 1))[:, 0]

    def rmatvec(self, u: np.ndarray) -> np.ndarray:
        return self.rmatmat(np.asarray(u).reshape(-1, 1))[:, 0]

    # operand protocol used by tangent_project
    right_mul = matmat
    left_mul_h = rmatmat


class LinearCombination:
    """``sum_i c_i Z_i`` over operands that support ``right_mul`` / ``left_mul_h``."""

    def __init__(self, terms: Sequence[tuple[complex, object]]):
        self.terms = [(c, z) for c, z in terms if c != 0]

    def right_mul(self, M: np.ndarray) -> np.ndarray:
        out = 0
        for c, z in self.terms:
            out = out + c * _right_mul(z, M)
        return out

    def left_mul_h(self, M: np.ndarray) -> np.ndarray:
        out = 0
        for c, z in self.terms:
            out = out + np.conj(c) * _left_mul_h(z, M)
        return out


def _right_mul(Z, M):
    if isinstance(Z, np.ndarray):
        return Z @ M
    return Z.right_mul(M)


def _left_mul_h(Z, M):
    if isinstance(Z, np.ndarray):
        return Z.conj().T @ M
    return Z.left_mul_h(M)


def hankel_matvec(X: np.ndarray, geom: HankelGeometry, v: np.ndarray) -> np.ndarray:
    """``H(X) @ v`` by per-channel FFT correlation."""
    v = np.asarray(v)
    if v.ndim != 1:
        return HankelOperator(X, geom).matmat(v)
    if v.shape[0] != geom.n_2:
        raise ValueError(f"vector has length {v.shape[0]}, expected n_2={geom.n_2}")
    return HankelOperator(X, geom).matvec(v)


def hankel_rmatvec(X: np.ndarray, geom: HankelGeometry, u: np.ndarray) -> np.ndarray:
    """``H(X)^H @ u`` by per-channel FFT correlation."""
    u = np.asarray(u)
    if u.ndim != 1:
        return HankelOperator(X, geom).rmatmat(u)
    if u.shape[0] != geom.n_c * geom.n_1:
        raise ValueError(f"vector has length {u.shape[0]}, expected {geom.n_c * geom.n_1}")
    return HankelOperator(X, geom).rmatvec(u)


def _pinv_dense(Z: np.ndarray, geom: HankelGeometry) -> np.ndarray:
    if Z.shape != geom.shape:
        raise ValueError(f"matrix shape {Z.shape} does not match lift shape {geom.shape}")
    blocks = Z.reshape(geom.n_1, geom.n_c, geom.n_2)
    out = np.zeros((geom.n_c, geom.n), dtype=np.complex128)
    for k1 in range(geom.n_1):
        out[:, k1 : k1 + geom.n_2] += blocks[k1]
    return out / geom.weights


def _pinv_factored(left: np.ndarray, right: np.ndarray, geom: HankelGeometry) -> np.ndarray:
    # sum_i conv(left_i restricted to channel k, conj(right_i)) per channel
    if left.shape[0] != geom.n_c * geom.n_1 or right.shape[0] != geom.n_2:
        raise ValueError(
            f"factor shapes {left.shape}, {right.shape} do not match lift shape {geom.shape}"
        )
    q = left.shape[1]
    fl = np.fft.fft(left.reshape(geom.n_1, geom.n_c, q), geom.nfft, axis=0)
    fr = np.fft.fft(right.conj(), geom.nfft, axis=0)
    conv = np.fft.ifft(np.einsum("fkq,fq->fk", fl, fr), axis=0)[: geom.n]
    return conv.T / geom.weights


def hankel_pinv(Z, geom: HankelGeometry) -> np.ndarray:
    """Anti-diagonal averaging: the Moore-Penrose pseudoinverse of the lift.

    ``Z`` may be a dense array, a :class:`RankRFactors` or a
    :class:`TangentMatrix`; factored inputs are never materialised.
    """
    if isinstance(Z, RankRFactors):
        return _pinv_factored(Z.U * Z.s, Z.V, geom)
    if isinstance(Z, TangentMatrix):
        return _pinv_factored(Z.left @ Z.core, Z.right, geom)
    return _pinv_dense(np.asarray(Z, dtype=np.complex128), geom)


def _orth_complement_qr(A: np.ndarray, basis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # A is assumed (numerically) orthogonal to basis; re-project once so the
    # Q factor stays orthogonal to basis even where A is rank deficient.
    Q, R = np.linalg.qr(A)
    Q = Q - basis @ (basis.conj().T @ Q)
    Q2, R2 = np.linalg.qr(Q)
    return Q2, R2 @ R


def tangent_project(L: RankRFactors, Z) -> TangentMatrix:
    """Project ``Z`` onto the tangent space of the rank-r manifold at ``L``.

    ``P(Z) = U U^H Z + Z V V^H - U U^H Z V V^H``.  ``Z`` only needs
    ``right_mul`` and ``left_mul_h`` (``Z @ M`` and ``Z^H @ M``); dense arrays,
    :class:`HankelOperator`, factored matrices and :class:`LinearCombination`
    all qualify.
    """
    U, V = L.U, L.V
    if Z is not None and hasattr(Z, "shape") and tuple(Z.shape) != L.shape:
        raise ValueError(f"operand shape {tuple(Z.shape)} does not match {L.shape}")
    ZV = _right_mul(Z, V)
    ZhU = _left_mul_h(Z, U)
    C = U.conj().T @ ZV
    A = ZV - U @ C
    B = ZhU - V @ C.conj().T
    Q1, R1 = _orth_complement_qr(A, U)
    Q2, R2 = _orth_complement_qr(B, V)
    r = L.rank
    core = np.zeros((2 * r, 2 * r), dtype=np.complex128)
    core[:r, :r] = C
    core[:r, r:] = R2.conj().T
    core[r:, :r] = R1
    return TangentMatrix(np.hstack([U, Q1]), core, np.hstack([V, Q2]))


def _drop_tiny(U, s, V) -> RankRFactors:
    if s.size and s[0] > 0:
        keep = s >= SIGMA_RTOL * s[0]
    else:
        keep = np.zeros(s.shape, dtype=bool)
    return RankRFactors(U[:, keep], s[keep], V[:, keep])


def _dense_svd(A: np.ndarray, r: int) -> RankRFactors:
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    return _drop_tiny(U[:, :r], s[:r], Vh[:r].conj().T)


def lanczos_svd(
    op,
    k: int,
    *,
    tol: float = 1e-10,
    max_steps: int | None = None,
    seed: int = 0,
) -> RankRFactors:
    """Top-``k`` singular triplets by Golub-Kahan-Lanczos bidiagonalisation.

    ``op`` needs ``shape``, ``matvec`` and ``rmatvec``.  Both Krylov bases
    are fully reorthogonalised by classical Gram-Schmidt, repeated once when
    the projection shrinks the norm below ``1/sqrt(2)`` of its value.  The
    Krylov space grows until every wanted triplet has residual below
    ``tol * sigma_1`` or the space is exhausted.
    """
    m, n = op.shape
    dim = min(m, n)
    if not 1 <= k <= dim:
        raise ValueError(f"k={k} outside [1, {dim}]")
    cap = dim if max_steps is None else min(dim, max_steps)

    rng = np.random.default_rng(seed)
    q = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    q /= np.linalg.norm(q)

    # bases stored row-wise so every prefix is one contiguous block
    P = np.zeros((cap, m), dtype=np.complex128)
    Q = np.zeros((cap + 1, n), dtype=np.complex128)
    alpha = np.zeros(cap)
    beta = np.zeros(cap)
    Q[0] = q

    def reorth(basis, v):
        # classical Gram-Schmidt; second pass only when the first cancelled most of v
        if basis.shape[0] == 0:
            return v
        norm0 = np.linalg.norm(v)
        v = v - (basis @ v.conj()).conj() @ basis
        if np.linalg.norm(v) < 0.7071 * norm0:
            v = v - (basis @ v.conj()).conj() @ basis
        return v

    steps = 0
    target = min(cap, 2 * k + 10)
    breakdown = False
    while True:
        while steps < target:
            j = steps
            p = op.matvec(Q[j])
            if j > 0:
                p = p - beta[j - 1] * P[j - 1]
            p = reorth(P[:j], p)
            alpha[j] = np.linalg.norm(p)
            steps += 1
            if alpha[j] <= 1e-300:
                breakdown = True
                break
            P[j] = p / alpha[j]
            w = op.rmatvec(P[j]) - alpha[j] * Q[j]
            w = reorth(Q[: j + 1], w)
            beta[j] = np.linalg.norm(w)
            if beta[j] <= 1e-300 * max(1.0, alpha[j]):
                breakdown = True
                break
            Q[j + 1] = w / beta[j]
        # once P spans C^m, P^H A = [B, beta e_k] [Q, q_{k+1}]^H holds exactly
        wide = not breakdown and steps == m < n
        B = np.zeros((steps, steps + wide), dtype=np.float64)
        B[np.arange(steps), np.arange(steps)] = alpha[:steps]
        B[np.arange(steps - 1 + wide), np.arange(1, steps + wide)] = beta[: steps - 1 + wide]
        Ub, sb, Vbh = np.linalg.svd(B, full_matrices=False)
        kk = min(k, steps)
        resid = np.abs(beta[steps - 1] * Ub[steps - 1, :kk])
        scale = sb[0] if sb.size and sb[0] > 0 else 1.0
        if breakdown or wide or steps >= cap or np.all(resid <= tol * scale):
            break
        target = min(cap, steps + max(k, 10))

    U = P[:steps].T @ Ub[:, :kk]
    V = Q[: steps + wide].T @ Vbh[:kk].conj().T
    return _drop_tiny(U, sb[:kk], V)


def partial_svd(op, k: int, *, dense_max: int = DENSE_SVD_MAX) -> RankRFactors:
    """Top-``k`` SVD of a matrix-free operator; dense below ``dense_max`` entries."""
    m, n = op.shape
    if not 1 <= k <= min(m, n):
        raise ValueError(f"rank {k} exceeds matrix capacity min{op.shape}")
    if m * n <= dense_max and hasattr(op, "dense"):
        return _dense_svd(op.dense(), k)
    return lanczos_svd(op, k)


def truncate_rank(W, r: int) -> RankRFactors:
    """Best rank-``r`` approximation, returned as a thin SVD.

    Dense arrays use a full SVD; a :class:`TangentMatrix` only needs the SVD of
    its ``2r x 2r`` core; matrix-free operators go through :func:`partial_svd`.
    """
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    if isinstance(W, TangentMatrix):
        if r > W.core.shape[0]:
            raise ValueError(f"rank {r} exceeds tangent rank capacity {W.core.shape[0]}")
        if not np.all(np.isfinite(W.core)):
            raise ValueError("matrix has non-finite entries")
        Uc, s, Vch = np.linalg.svd(W.core)
        return _drop_tiny(W.left @ Uc[:, :r], s[:r], W.right @ Vch[:r].conj().T)
    if isinstance(W, RankRFactors):
        if r > W.rank:
            raise ValueError(f"rank {r} exceeds factor rank {W.rank}")
        return W.truncate(r)
    if isinstance(W, np.ndarray):
        if r > min(W.shape):
            raise ValueError(f"rank {r} exceeds matrix capacity min{W.shape}")
        return _dense_svd(W.astype(np.complex128, copy=False), r)
    if isinstance(W, HankelOperator) and not np.all(np.isfinite(W.X)):
        raise ValueError("matrix has non-finite entries")
    return partial_svd(W, r)
