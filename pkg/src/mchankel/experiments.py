"""Seeded experiment sweeps: phase transitions, noise levels, heavy-ball comparisons.

Every trial derives its seeds from ``(base_seed, cell key, trial)`` where the
cell key hashes the cell's own parameters, so adding grid cells never changes
the draws of existing ones.  Trials can run in worker processes; results are
merged in grid order, so every CSV column except ``mean_ms`` is identical
across reruns and worker counts.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .completion import FihtConfig, am_fiht, ram_fiht, rel_err_unobserved
from .hankel_core import HankelGeometry
from .robust import SapConfig, sap
from .sampling import CORRUPTION_MODES, MASK_MODES, CorruptionSpec, corrupt, sample_mask
from .signal_gen import gen_spectral

__all__ = [
    "ALGORITHMS",
    "ExperimentSpec",
    "TrialResult",
    "SweepResult",
    "cell_key",
    "trial_seeds",
    "add_noise",
    "run_trial",
    "run_phase_sweep",
    "run_noise_sweep",
    "run_heavyball_compare",
    "PHASE_HEADER",
    "NOISE_HEADER",
    "HB_HEADER",
]

ALGORITHMS = ("am_fiht", "ram_fiht", "sap")

PHASE_HEADER = (
    "algorithm", "r", "mask_mode", "loss", "corruption_mode", "alpha",
    "trials", "success_rate", "mean_iters", "mean_err", "mean_ms", "partial",
)
NOISE_HEADER = (
    "algorithm", "r", "mask_mode", "loss", "noise_level",
    "trials", "converged", "mean_err", "ratio", "mean_ms", "partial",
)
HB_HEADER = (
    "algorithm", "r", "mask_mode", "loss", "beta",
    "trials", "median_iters", "reached", "diverged", "successes", "flagged", "mean_ms", "partial",
)


@dataclass
class ExperimentSpec:
    """One sweep.  Grids are tuples; ``None`` thresholds and amplitude laws
    fall back to the algorithm's own protocol."""

    algorithm: str = "am_fiht"
    n_c: int = 10
    n: int = 200
    n_1: int | None = None  # None -> n // 2
    ranks: tuple = (5,)
    mask_mode: str = "M1"
    losses: tuple = (0.5,)
    corruption_mode: str | None = None
    alphas: tuple = (0.0,)
    trials: int = 10
    base_seed: int = 0
    threshold: float | None = None  # None -> 1e-3 completion, 1e-2 robust
    amp_exponent: float | None = None  # None -> 1.0 completion, 0.5 robust
    damped: bool = False
    min_sep: float | None = None
    boost_first: float = 1.0
    beta: float | None = None  # None -> (1 - p)^2 / 5
    max_iter: int = 300
    noise_levels: tuple = (1e-3, 1e-2)
    betas: tuple = (None, 0.0)
    tol_level: float = 1e-5
    output: str | None = None

    def __post_init__(self):
        for name in ("ranks", "losses", "alphas", "noise_levels", "betas"):
            setattr(self, name, tuple(getattr(self, name)))
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}, got {self.mask_mode!r}")
        if self.corruption_mode is not None and self.corruption_mode not in CORRUPTION_MODES:
            raise ValueError(f"corruption_mode must be one of {CORRUPTION_MODES}, got {self.corruption_mode!r}")
        for name in ("ranks", "losses", "alphas", "noise_levels", "betas"):
            if not getattr(self, name):
                raise ValueError(f"grid {name} is empty")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.threshold is not None and self.threshold <= 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if any(r < 1 for r in self.ranks):
            raise ValueError("ranks must be >= 1")
        if any(not 0 <= x < 1 for x in self.losses):
            raise ValueError("losses must lie in [0, 1)")
        self.geometry  # validates n_1

    @property
    def robust(self) -> bool:
        return self.algorithm == "sap"

    @property
    def geometry(self) -> HankelGeometry:
        return HankelGeometry(self.n_c, self.n, self.n // 2 if self.n_1 is None else self.n_1)

    @property
    def success_threshold(self) -> float:
        if self.threshold is not None:
            return self.threshold
        return 1e-2 if self.robust else 1e-3

    @property
    def amplitude_exponent(self) -> float:
        if self.amp_exponent is not None:
            return self.amp_exponent
        return 0.5 if self.robust else 1.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrialResult:
    cell: dict
    trial: int
    seed: int
    rel_err: float
    success: bool
    iterations: int
    reason: str
    wall_ms: float
    iters_to_tol: int | None = None
    flags: list = field(default_factory=list)
    support_contained: bool | None = None
    beta: float | None = None


@dataclass
class SweepResult:
    header: tuple
    rows: list = field(default_factory=list)
    trials: list = field(default_factory=list)
    partial: bool = False

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            _write_csv(fh, self.header, self.rows, self.partial)


def cell_key(cell: dict) -> int:
    """Stable 63-bit hash of a cell's parameters."""
    blob = json.dumps(cell, sort_keys=True, default=repr).encode()
    return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "little") >> 1


def trial_seeds(base_seed: int, cell: dict, trial: int) -> dict:
    """Independent 63-bit seeds for the signal, mask, corruption and noise of one trial."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(cell_key(cell), trial))
    words = [int(w) for w in ss.generate_state(5, np.uint64) >> np.uint64(1)]
    return dict(zip(("trial", "signal", "mask", "corruption", "noise"), words))


def add_noise(X: np.ndarray, level: float, seed: int) -> np.ndarray:
    """Circular complex Gaussian noise with ``E|N_ij|^2 = (level * E_x)^2``, ``E_x = ||X||_F / sqrt(n_c n)``."""
    X = np.asarray(X, dtype=np.complex128)
    if level == 0:
        return X.copy()
    sd = level * np.linalg.norm(X) / math.sqrt(X.size)
    rng = np.random.default_rng(seed)
    return X + sd * (rng.standard_normal(X.shape) + 1j * rng.standard_normal(X.shape)) / math.sqrt(2)


def _score(X_hat, truth, mask) -> float:
    if mask.observed.all():
        return float(np.linalg.norm(X_hat - truth) / np.linalg.norm(truth))
    return rel_err_unobserved(X_hat, truth, mask)


def run_trial(
    spec: ExperimentSpec,
    cell: dict,
    trial: int,
    *,
    noise_level: float = 0.0,
    beta="spec",
    stop_at_tol: bool = False,
) -> TrialResult:
    """One seeded recovery.  ``cell`` holds ``r``, ``loss`` and ``alpha``."""
    seeds = trial_seeds(spec.base_seed, cell, trial)
    geom = spec.geometry
    r, loss, alpha = cell["r"], cell["loss"], cell.get("alpha", 0.0)
    min_sep = spec.min_sep
    sig = gen_spectral(
        spec.n_c, spec.n, r, seeds["signal"], damped=spec.damped, min_sep=min_sep,
        amp_exponent=spec.amplitude_exponent, boost_first=spec.boost_first,
    )
    truth = sig.data
    mask = sample_mask(spec.n_c, spec.n, spec.mask_mode, loss, seeds["mask"])
    data, S_true = truth, None
    if spec.corruption_mode is not None and alpha > 0:
        data, S_true = corrupt(truth, CorruptionSpec(spec.corruption_mode, alpha, seeds["corruption"]))
    data = add_noise(data, noise_level, seeds["noise"])
    observed = np.where(mask.observed, data, 0)

    t0 = time.perf_counter()
    support_ok = None
    if spec.robust:
        X_hat, S_hat, rec = sap(observed, mask, geom, SapConfig(r=r, seed=seeds["trial"]))
        true_supp = np.zeros(mask.shape, bool) if S_true is None else (S_true != 0) & mask.observed
        support_ok = bool(not (S_hat.support & ~true_supp).any())
    else:
        b = spec.beta if beta == "spec" else beta
        cfg = FihtConfig(
            r=r, beta=b, max_iter=spec.max_iter, noise_aware=noise_level > 0,
            stop_error=spec.tol_level if stop_at_tol else None, seed=seeds["trial"],
            variant="RAM" if spec.algorithm == "ram_fiht" else "AM",
        )
        solver = ram_fiht if spec.algorithm == "ram_fiht" else am_fiht
        X_hat, rec = solver(observed, mask, geom, cfg, truth=truth)
    wall_ms = 1e3 * (time.perf_counter() - t0)
    err = _score(X_hat.data, truth, mask)
    ok = rec.reason != "diverged" and err <= spec.success_threshold
    return TrialResult(
        cell=cell, trial=trial, seed=seeds["trial"], rel_err=err, success=bool(ok),
        iterations=rec.iterations, reason=rec.reason, wall_ms=wall_ms,
        iters_to_tol=rec.iterations_to(spec.tol_level) if rec.rel_error else None,
        flags=list(rec.flags), support_contained=support_ok, beta=rec.extra.get("beta"),
    )


def _job(args):
    spec, cell, trial, kwargs = args
    return run_trial(spec, cell, trial, **kwargs)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _write_csv(fh, header, rows, partial) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row.get(h)) for h in header])
    if partial:
        w.writerow(["" if h != "partial" else "true" for h in header])


def _run(spec, cells, summarize, header, threads, out, trial_kwargs, keep_trials):
    """Run all trials of each cell, cell by cell; flush rows as they complete."""
    result = SweepResult(header=header)
    fh = open(out, "w", newline="") if out else None
    writer = csv.writer(fh, lineterminator="\n") if fh else None
    if writer:
        writer.writerow(header)
        fh.flush()
    pool = ProcessPoolExecutor(max_workers=threads) if threads and threads > 1 else None
    try:
        for cell, extra in cells:
            jobs = [(spec, cell, t, trial_kwargs(extra)) for t in range(spec.trials)]
            outs = list(pool.map(_job, jobs)) if pool else [_job(j) for j in jobs]
            row = summarize(cell, extra, outs)
            row["partial"] = False
            result.rows.append(row)
            if keep_trials:
                result.trials.extend(outs)
            if writer:
                writer.writerow([_fmt(row.get(h)) for h in header])
                fh.flush()
    except KeyboardInterrupt:
        result.partial = True
        if writer:
            writer.writerow(["" if h != "partial" else "true" for h in header])
            fh.flush()
    finally:
        if pool:
            pool.shutdown(wait=False, cancel_futures=True)
        if fh:
            fh.close()
    return result


def _mean(xs) -> float:
    xs = [x for x in xs if x is not None and math.isfinite(x)]
    return float(np.mean(xs)) if xs else float("nan")


def run_phase_sweep(spec: ExperimentSpec, *, threads: int = 1, out=None, keep_trials: bool = False) -> SweepResult:
    """Success rate over the ``ranks x losses x alphas`` grid."""
    out = out if out is not None else spec.output
    alphas = spec.alphas if spec.corruption_mode else (0.0,)
    cells = [
        ({"r": r, "loss": loss, "alpha": alpha}, None)
        for r, loss, alpha in itertools.product(spec.ranks, spec.losses, alphas)
    ]

    def summarize(cell, _extra, outs):
        return {
            "algorithm": spec.algorithm, "r": cell["r"], "mask_mode": spec.mask_mode,
            "loss": cell["loss"], "corruption_mode": spec.corruption_mode or "",
            "alpha": cell["alpha"], "trials": len(outs),
            "success_rate": sum(o.success for o in outs) / len(outs),
            "mean_iters": _mean([o.iterations for o in outs]),
            "mean_err": _mean([o.rel_err for o in outs]),
            "mean_ms": _mean([o.wall_ms for o in outs]),
        }

    return _run(spec, cells, summarize, PHASE_HEADER, threads, out, lambda _e: {}, keep_trials)


def run_noise_sweep(spec: ExperimentSpec, *, threads: int = 1, out=None, keep_trials: bool = False) -> SweepResult:
    """Mean error and error-to-noise ratio per noise level ``sigma / E_x``.

    Seeds do not depend on the level, so every level sees the same signals,
    masks and noise directions.
    """
    if spec.robust:
        raise ValueError("noise sweeps run am_fiht or ram_fiht")
    out = out if out is not None else spec.output
    cells = [
        ({"r": r, "loss": loss, "alpha": 0.0}, level)
        for r, loss, level in itertools.product(spec.ranks, spec.losses, spec.noise_levels)
    ]

    def summarize(cell, level, outs):
        conv = [o for o in outs if o.reason != "diverged"]
        err = _mean([o.rel_err for o in conv])
        return {
            "algorithm": spec.algorithm, "r": cell["r"], "mask_mode": spec.mask_mode,
            "loss": cell["loss"], "noise_level": level, "trials": len(outs),
            "converged": len(conv), "mean_err": err,
            "ratio": err / level if level > 0 else float("nan"),
            "mean_ms": _mean([o.wall_ms for o in outs]),
        }

    return _run(spec, cells, summarize, NOISE_HEADER, threads, out, lambda lv: {"noise_level": lv}, keep_trials)


def run_heavyball_compare(spec: ExperimentSpec, *, threads: int = 1, out=None, keep_trials: bool = False) -> SweepResult:
    """Median iterations to reach ``tol_level`` full relative error, per beta.

    ``None`` in ``spec.betas`` means the default ``(1 - p)^2 / 5``.  Seeds do
    not depend on beta, so the comparison is matched.
    """
    if spec.robust:
        raise ValueError("heavy-ball comparisons run am_fiht or ram_fiht")
    out = out if out is not None else spec.output
    cells = [
        ({"r": r, "loss": loss, "alpha": 0.0}, beta)
        for r, loss, beta in itertools.product(spec.ranks, spec.losses, spec.betas)
    ]

    def summarize(cell, beta, outs):
        reached = [o.iters_to_tol for o in outs if o.iters_to_tol is not None]
        return {
            "algorithm": spec.algorithm, "r": cell["r"], "mask_mode": spec.mask_mode,
            "loss": cell["loss"], "beta": outs[0].beta, "trials": len(outs),
            "median_iters": float(np.median(reached)) if reached else float("nan"),
            "reached": len(reached),
            "diverged": sum(o.reason == "diverged" for o in outs),
            "successes": sum(o.success for o in outs),
            "flagged": any("beta_outside_guarantee" in o.flags for o in outs),
            "mean_ms": _mean([o.wall_ms for o in outs]),
        }

    return _run(
        spec, cells, summarize, HB_HEADER, threads, out,
        lambda b: {"beta": b, "stop_at_tol": True}, keep_trials,
    )
