"""Self-check suite for the structural operator identities.

Each check draws random instances from a fixed seed and records the worst
deviation it saw.  Core functions are looked up through their module at call
time so that a patched implementation is what gets checked.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import completion as fiht
from . import hankel_core as hc
from . import sampling as smp
from . import signal_gen as sg

__all__ = ["CheckResult", "CHECKS", "run_verify"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tol: float
    instances: int
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst={self.worst:.3e} tol={self.tol:.0e} n={self.instances} ({self.seconds:.2f}s)"


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _geom(rng, max_nc=5, max_n=96):
    n_c = int(rng.integers(1, max_nc + 1))
    n = int(rng.integers(1, max_n + 1))
    return hc.HankelGeometry(n_c, n, int(rng.integers(1, n + 1)))


def _rel(a, b):
    den = max(np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / den)


def check_pinv_lift(rng, count):
    worst = 0.0
    for _ in range(count):
        g = _geom(rng)
        X = _cplx(rng, g.n_c, g.n)
        worst = max(worst, _rel(hc.hankel_pinv(hc.hankel_lift(X, g), g), X))
    return worst


def check_lift_adjoint(rng, count):
    # <H X, Z> = <X, w * H^dagger Z>
    worst = 0.0
    for _ in range(count):
        g = _geom(rng)
        X = _cplx(rng, g.n_c, g.n)
        Z = _cplx(rng, *g.shape)
        lhs = np.vdot(hc.hankel_lift(X, g), Z)
        rhs = np.vdot(X, g.weights * hc.hankel_pinv(Z, g))
        worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(X) * np.linalg.norm(Z)))
    return worst


def check_matvec_adjoint(rng, count):
    worst = 0.0
    for _ in range(count):
        g = _geom(rng)
        X = _cplx(rng, g.n_c, g.n)
        v = _cplx(rng, g.n_2)
        u = _cplx(rng, g.shape[0])
        lhs = np.vdot(u, hc.hankel_matvec(X, g, v))
        rhs = np.vdot(hc.hankel_rmatvec(X, g, u), v)
        scale = np.linalg.norm(hc.hankel_lift(X, g), 2) * np.linalg.norm(u) * np.linalg.norm(v)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def check_matvec_dense(rng, count):
    worst = 0.0
    for _ in range(count):
        g = _geom(rng, max_n=256)
        X = _cplx(rng, g.n_c, g.n)
        H = hc.hankel_lift(X, g)
        v = _cplx(rng, g.n_2)
        u = _cplx(rng, g.shape[0])
        worst = max(worst, _rel(hc.hankel_matvec(X, g, v), H @ v), _rel(hc.hankel_rmatvec(X, g, u), H.conj().T @ u))
    return worst


def _random_factors(rng, m, n, r):
    U, _ = np.linalg.qr(_cplx(rng, m, r))
    V, _ = np.linalg.qr(_cplx(rng, n, r))
    return hc.RankRFactors(U, np.sort(rng.uniform(0.5, 2.0, r))[::-1], V)


def check_tangent_projection(rng, count):
    worst = 0.0
    for _ in range(count):
        m, n = int(rng.integers(2, 40)), int(rng.integers(2, 40))
        r = int(rng.integers(1, min(m, n) // 2 + 1))
        L = _random_factors(rng, m, n, r)
        A, B = _cplx(rng, m, n), _cplx(rng, m, n)
        PA = hc.tangent_project(L, A).dense()
        PB = hc.tangent_project(L, B).dense()
        idem = _rel(hc.tangent_project(L, PA).dense(), PA)
        adj = abs(np.vdot(PA, B) - np.vdot(A, PB)) / (np.linalg.norm(A) * np.linalg.norm(B))
        worst = max(worst, idem, adj)
    return worst


def check_truncate_structured(rng, count):
    worst = 0.0
    for _ in range(count):
        m, n = int(rng.integers(4, 40)), int(rng.integers(4, 40))
        r = int(rng.integers(1, min(m, n) // 2 + 1))
        L = _random_factors(rng, m, n, r)
        W = hc.tangent_project(L, _cplx(rng, m, n))
        fast = hc.truncate_rank(W, r).dense()
        ref = hc.truncate_rank(W.dense(), r).dense()
        worst = max(worst, _rel(fast, ref))
    return worst


def check_lanczos_dense(rng, count):
    worst = 0.0
    for _ in range(count):
        g = _geom(rng, max_nc=4, max_n=200)
        X = _cplx(rng, g.n_c, g.n)
        op = hc.HankelOperator(X, g)
        k = int(rng.integers(1, min(min(g.shape), 8) + 1))
        s_ref = np.linalg.svd(op.dense(), compute_uv=False)[:k]
        f = hc.lanczos_svd(op, k)
        worst = max(worst, float(np.max(np.abs(f.s - s_ref[: f.rank])) / s_ref[0]))
    return worst


def check_trim_caps(rng, count):
    worst = 0.0
    for _ in range(count):
        g = _geom(rng, max_n=64)
        r = int(rng.integers(1, min(g.shape) + 1))
        L = _random_factors(rng, *g.shape, r)
        mu = float(rng.uniform(0.5, 3.0))
        A, s, B = fiht.trim(L, mu, g)
        for M, T, cap in (
            (L.U, A, np.sqrt(mu * r / (g.n_c * g.n_1))),
            (L.V, B, np.sqrt(mu * r / g.n_2)),
        ):
            before = np.linalg.norm(M, axis=1)
            after = np.linalg.norm(T, axis=1)
            over = before > cap
            worst = max(worst, float(np.max(after - cap, initial=0.0)) / cap)
            worst = max(worst, float(np.max(np.abs(T[~over] - M[~over]), initial=0.0)))
            if over.any():
                worst = max(worst, float(np.max(np.abs(after[over] - cap))) / cap)
    return worst


def check_projection(rng, count):
    worst = 0.0
    for _ in range(count):
        n_c, n = int(rng.integers(1, 8)), int(rng.integers(1, 50))
        mask = smp.ObservationMask(rng.random((n_c, n)) < rng.uniform(0.1, 0.9))
        A, B = _cplx(rng, n_c, n), _cplx(rng, n_c, n)
        PA = smp.project(mask, A)
        idem = _rel(smp.project(mask, PA), PA) if np.any(PA) else 0.0
        adj = abs(np.vdot(PA, B) - np.vdot(A, smp.project(mask, B))) / (np.linalg.norm(A) * np.linalg.norm(B))
        worst = max(worst, idem, adj)
    return worst


def check_incoherence_bound(rng, count):
    # mu / (n_c mu_0) must stay <= 1
    worst = 0.0
    for i in range(count):
        n_c = int(rng.integers(2, 8))
        n = int(rng.integers(40, 120))
        r = int(rng.integers(1, 5))
        g = hc.HankelGeometry(n_c, n, int(rng.integers(r + 1, n + 1 - r)))
        sig = sg.gen_spectral(n_c, n, r, int(rng.integers(2**31)), min_sep=1 / n)
        mu = sg.incoherence(sig, g, r)[0]
        mu0 = sg.channel_incoherence(sig, g, r)
        worst = max(worst, mu / (n_c * mu0))
    return worst


# name -> (function, tolerance, instances)
CHECKS = {
    "pinv_of_lift_is_identity": (check_pinv_lift, 1e-12, 1000),
    "lift_adjoint_identity": (check_lift_adjoint, 1e-10, 500),
    "matvec_adjoint_identity": (check_matvec_adjoint, 1e-10, 500),
    "fft_matvec_matches_dense": (check_matvec_dense, 1e-10, 200),
    "tangent_projection_idempotent_self_adjoint": (check_tangent_projection, 1e-10, 200),
    "structured_truncation_matches_dense": (check_truncate_structured, 1e-8, 200),
    "lanczos_matches_dense_svd": (check_lanczos_dense, 1e-8, 50),
    "trim_caps_exact": (check_trim_caps, 1e-12, 200),
    "mask_projection_idempotent_self_adjoint": (check_projection, 1e-14, 200),
    "incoherence_bound": (check_incoherence_bound, 1.0, 50),
}


def run_verify(seed: int = 0, scale: float = 1.0, only=None) -> list[CheckResult]:
    """Run every check (or those named in ``only``); ``scale`` multiplies instance counts."""
    out = []
    for i, (name, (fn, tol, count)) in enumerate(CHECKS.items()):
        if only and name not in only:
            continue
        rng = np.random.default_rng([seed, i])
        n = max(1, int(round(count * scale)))
        t0 = time.perf_counter()
        try:
            worst = float(fn(rng, n))
        except Exception:  # a crashing check is a failing check
            worst = float("inf")
        ok = bool(np.isfinite(worst) and worst <= tol)
        out.append(CheckResult(name, ok, worst, tol, n, time.perf_counter() - t0))
    return out
