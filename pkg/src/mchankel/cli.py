"""Command-line harness.

Subcommands: gen, complete, robust, sweep, noise-sweep, hb-compare, verify.
Every option can also come from an INI file given by ``--config``: keys in
``[run]`` apply to all subcommands, keys in ``[<subcommand>]`` to one.  Key
names are the long flag names (dashes or underscores).  Flags win.

Exit codes: 0 success, 2 recovery failed or diverged, 3 invalid input,
4 verification failed.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import io
from .completion import FihtConfig, am_fiht, ram_fiht, rel_err_unobserved
from .experiments import ExperimentSpec, _fmt, run_heavyball_compare, run_noise_sweep, run_phase_sweep
from .hankel_core import HankelGeometry
from .robust import SapConfig, sap
from .sampling import CorruptionSpec, ObservationMask, corrupt, sample_mask
from .signal_gen import gen_spectral
from .verify import run_verify

EXIT_OK = 0
EXIT_FAILED = 2
EXIT_INVALID = 3
EXIT_VERIFY = 4
EXIT_INTERRUPTED = 130

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _bool(s) -> bool:
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _float_list(s) -> tuple:
    return tuple(float(x) for x in str(s).replace(",", " ").split())


def _int_list(s) -> tuple:
    return tuple(int(x) for x in str(s).replace(",", " ").split())


def _beta_list(s) -> tuple:
    out = []
    for x in str(s).replace(",", " ").split():
        out.append(None if x.lower() in ("default", "none") else float(x))
    return tuple(out)


def _opt_str(s):
    return None if s is None or str(s).lower() in ("", "none") else str(s)


# dest -> (flag, converter, default, help); shared by flags and config keys
COMMON = {
    "seed": ("--seed", int, 0, "base seed"),
    "out": ("--out", str, None, "output path"),
    "threads": ("--threads", int, 1, "worker processes for sweeps"),
    "json": ("--json", _bool, False, "print JSON lines"),
}
SIGNAL = {
    "nc": ("--nc", int, 30, "number of channels"),
    "n": ("--n", int, 300, "samples per channel"),
    "r": ("--r", int, 5, "number of modes"),
    "damped": ("--damped", _bool, False, "draw dampings in (0, 0.02)"),
    "min_sep": ("--min-sep", float, None, "minimum wrap-around frequency separation"),
    "amp_exponent": ("--amp-exponent", float, 1.0, "amplitude law 1 + 10^(e a)"),
    "boost_first": ("--boost-first", float, 1.0, "scale of the first mode"),
}
RECOVERY = {
    "input": ("--input", str, None, "matrix file (.mchs)"),
    "mask": ("--mask", str, None, "mask JSON; when absent a mask is sampled and the input is the ground truth"),
    "truth": ("--truth", str, None, "ground-truth matrix for error reports when --mask is given"),
    "r": ("--r", int, 5, "target rank"),
    "n1": ("--n1", int, None, "Hankel row-block count (default n // 2)"),
    "mask_mode": ("--mask-mode", str, "M1", "M1, M2 or M3"),
    "loss": ("--loss", float, 0.5, "fraction of data lost"),
    "report_error": ("--report-error", _bool, False, "require ground truth and report errors"),
    "threshold": ("--threshold", float, None, "success threshold on the unobserved relative error"),
    "mask_out": ("--mask-out", str, None, "write the mask as JSON"),
}
COMPLETE = {
    "algorithm": ("--algorithm", str, "am", "am or ram"),
    "beta": ("--beta", float, None, "heavy-ball weight (default (1-p)^2/5)"),
    "max_iter": ("--max-iter", int, 300, "iteration cap"),
    "tol": ("--tol", float, 1e-6, "relative-change tolerance"),
    "mu": ("--mu", float, None, "incoherence bound for trimming (ram)"),
    "noise_aware": ("--noise-aware", _bool, False, "stop when the change stalls"),
}
ROBUST = {
    "corruption_mode": ("--corruption-mode", _opt_str, None, "B1, B2 or B3"),
    "alpha": ("--alpha", float, 0.0, "corruption fraction"),
    "quadrant1": ("--quadrant1", _bool, False, "corruption phases in (0, pi/2)"),
    "epsilon": ("--epsilon", float, 1e-3, "target accuracy"),
    "eta": ("--eta", float, None, "threshold coefficient (default r / sqrt(n_c n_1 n_2))"),
    "max_inner": ("--max-inner", int, 200, "inner iteration cap"),
    "xi_decay": ("--xi-decay", float, 0.8, "per-step decay of the threshold within a stage"),
    "sparse_out": ("--sparse-out", str, None, "write the sparse estimate here"),
}
SWEEP = {
    "algorithm": ("--algorithm", str, "am_fiht", "am_fiht, ram_fiht or sap"),
    "nc": ("--nc", int, 10, "number of channels"),
    "n": ("--n", int, 200, "samples per channel"),
    "n1": ("--n1", int, None, "Hankel row-block count"),
    "ranks": ("--ranks", _int_list, (5,), "rank grid"),
    "mask_mode": ("--mask-mode", str, "M1", "M1, M2 or M3"),
    "losses": ("--losses", _float_list, (0.5,), "loss grid"),
    "corruption_mode": ("--corruption-mode", _opt_str, None, "B1, B2 or B3"),
    "alphas": ("--alphas", _float_list, (0.0,), "corruption grid"),
    "trials": ("--trials", int, 10, "trials per cell"),
    "threshold": ("--threshold", float, None, "success threshold"),
    "amp_exponent": ("--amp-exponent", float, None, "amplitude law exponent"),
    "min_sep": ("--min-sep", float, None, "minimum frequency separation"),
    "damped": ("--damped", _bool, False, "damped modes"),
    "boost_first": ("--boost-first", float, 1.0, "scale of the first mode"),
    "beta": ("--beta", float, None, "heavy-ball weight"),
    "max_iter": ("--max-iter", int, 300, "iteration cap"),
}
NOISE = {"noise_levels": ("--noise-levels", _float_list, (1e-3, 1e-2), "sigma / E_x grid")}
HB = {
    "betas": ("--betas", _beta_list, (None, 0.0), "beta grid; 'default' means (1-p)^2/5"),
    "tol_level": ("--tol-level", float, 1e-5, "error level to count iterations to"),
}
VERIFY = {"scale": ("--scale", float, 1.0, "multiplier on instance counts")}

SUBCOMMANDS = {
    "gen": {**SIGNAL},
    "complete": {**RECOVERY, **COMPLETE},
    "robust": {**RECOVERY, **ROBUST},
    "sweep": {**SWEEP},
    "noise-sweep": {**SWEEP, **NOISE},
    "hb-compare": {**SWEEP, **HB},
    "verify": {**VERIFY},
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mchankel", description="Low-rank Hankel recovery of multi-channel time series.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, table in SUBCOMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="INI config file")
        for dest, (flag, conv, _default, helptext) in {**COMMON, **table}.items():
            if conv is _bool:
                p.add_argument(flag, dest=dest, action="store_const", const=True, default=None, help=helptext)
            else:
                p.add_argument(flag, dest=dest, type=conv, default=None, help=helptext)
    return parser


def _config_values(path, command, table) -> dict:
    sections = io.read_config(path)
    merged = {}
    for section in ("run", command, command.replace("-", "_")):
        for key, raw in sections.get(section, {}).items():
            key = key.replace("-", "_")
            if key in table:
                merged[key] = raw
            elif section != "run":  # [run] is shared, so foreign keys are fine there
                raise UsageError(f"unknown config key {key!r} in [{section}]")
    return {key: table[key][1](raw) for key, raw in merged.items()}


def resolve(args) -> argparse.Namespace:
    """Merge flags over config over defaults."""
    table = {**COMMON, **SUBCOMMANDS[args.command]}
    cfg = _config_values(args.config, args.command, table) if args.config else {}
    values = {}
    for dest, (_flag, _conv, default, _help) in table.items():
        v = getattr(args, dest)
        values[dest] = v if v is not None else cfg.get(dest, default)
    return argparse.Namespace(command=args.command, config=args.config, **values)


def _emit(a, payload: dict) -> None:
    payload = io.to_jsonable(payload)
    if a.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        for k, v in payload.items():
            print(f"{k}: {v}")


def cmd_gen(a) -> int:
    if not a.out:
        raise UsageError("gen needs --out")
    sig = gen_spectral(
        a.nc, a.n, a.r, a.seed, damped=a.damped, min_sep=a.min_sep,
        amp_exponent=a.amp_exponent, boost_first=a.boost_first,
    )
    sig.meta.update(amp_exponent=a.amp_exponent, boost_first=a.boost_first, damped=a.damped)
    io.save_signal(a.out, sig)
    _emit(a, {"command": "gen", "path": a.out, "n_c": a.nc, "n": a.n, "r": a.r, "seed": a.seed})
    return EXIT_OK


def _sub_seeds(seed: int) -> tuple[int, int]:
    w = np.random.SeedSequence(seed).generate_state(2, np.uint64) >> np.uint64(1)
    return int(w[0]), int(w[1])


def _load_problem(a):
    """Return ``(data, mask, truth, geom)``; ``truth`` may be ``None``."""
    if not a.input:
        raise UsageError(f"{a.command} needs --input")
    data = io.read_matrix(a.input)
    n_c, n = data.shape
    mask_seed, _ = _sub_seeds(a.seed)
    if a.mask:
        with open(a.mask) as fh:
            mask = io.mask_from_json(json.load(fh))
        if mask.shape != data.shape:
            raise UsageError(f"mask shape {mask.shape} does not match data {data.shape}")
        truth = io.read_matrix(a.truth) if a.truth else None
    else:
        mask = sample_mask(n_c, n, a.mask_mode, a.loss, mask_seed)
        truth = data
    if a.report_error and truth is None:
        raise UsageError("--report-error needs ground truth: pass --truth or drop --mask")
    geom = HankelGeometry(n_c, n, n // 2 if a.n1 is None else a.n1)
    if a.mask_out:
        with open(a.mask_out, "w") as fh:
            json.dump(io.mask_to_json(mask), fh)
    return data, mask, truth, geom


def _error(X_hat, truth, mask: ObservationMask) -> float:
    if mask.observed.all():
        return float(np.linalg.norm(X_hat - truth) / np.linalg.norm(truth))
    return rel_err_unobserved(X_hat, truth, mask)


def cmd_complete(a) -> int:
    if a.algorithm not in ("am", "ram"):
        raise UsageError(f"--algorithm must be am or ram, got {a.algorithm!r}")
    data, mask, truth, geom = _load_problem(a)
    cfg = FihtConfig(
        r=a.r, beta=a.beta, max_iter=a.max_iter, tol_rel_change=a.tol,
        variant=a.algorithm.upper(), mu=a.mu, noise_aware=a.noise_aware, seed=a.seed,
    )
    solver = am_fiht if a.algorithm == "am" else ram_fiht
    X_hat, rec = solver(np.where(mask.observed, data, 0), mask, geom, cfg, truth=truth)
    report = {
        "command": "complete", "algorithm": a.algorithm, "iterations": rec.iterations,
        "reason": rec.reason, "p": mask.p, "wall_time": rec.wall_time, "flags": rec.flags,
    }
    failed = rec.reason == "diverged"
    if truth is not None:
        err = _error(X_hat.data, truth, mask)
        thr = 1e-3 if a.threshold is None else a.threshold
        report.update(rel_err_unobserved=err, success=err <= thr)
        failed = failed or err > thr
    if a.out:
        io.save_signal(a.out, X_hat, extra={"mask": io.mask_to_json(mask), "report": report})
    _emit(a, report)
    return EXIT_FAILED if failed else EXIT_OK


def cmd_robust(a) -> int:
    data, mask, truth, geom = _load_problem(a)
    S_true = None
    if a.corruption_mode and a.alpha > 0:
        if a.mask:
            raise UsageError("--corruption-mode applies to clean input; drop --mask")
        _, corr_seed = _sub_seeds(a.seed)
        data, S_true = corrupt(data, CorruptionSpec(a.corruption_mode, a.alpha, corr_seed, a.quadrant1))
    elif a.corruption_mode is None and a.alpha > 0:
        raise UsageError("--alpha needs --corruption-mode")
    cfg = SapConfig(
        r=a.r, epsilon=a.epsilon, eta=a.eta, max_inner=a.max_inner, xi_decay=a.xi_decay, seed=a.seed
    )
    X_hat, S_hat, rec = sap(np.where(mask.observed, data, 0), mask, geom, cfg, truth=truth)
    report = {
        "command": "robust", "iterations": rec.iterations, "stages": rec.extra["stages"],
        "reason": rec.reason, "p": mask.p, "support_size": S_hat.count,
        "wall_time": rec.wall_time, "flags": rec.flags,
    }
    failed = rec.reason == "diverged"
    if truth is not None:
        err = _error(X_hat.data, truth, mask)
        thr = 1e-2 if a.threshold is None else a.threshold
        report.update(rel_err_unobserved=err, success=err <= thr)
        failed = failed or err > thr
    if truth is not None and not a.mask:
        true_supp = np.zeros(mask.shape, bool) if S_true is None else (S_true != 0) & mask.observed
        hits = int((S_hat.support & true_supp).sum())
        report.update(
            support_precision=hits / S_hat.count if S_hat.count else 1.0,
            support_recall=hits / int(true_supp.sum()) if true_supp.any() else 1.0,
            support_contained=bool(not (S_hat.support & ~true_supp).any()),
        )
    if a.out:
        io.save_signal(a.out, X_hat, extra={"mask": io.mask_to_json(mask), "report": report})
        sparse_path = a.sparse_out or f"{a.out}.sparse.mchs"
        io.write_matrix(sparse_path, S_hat.values)
        report["sparse_path"] = sparse_path
    _emit(a, report)
    return EXIT_FAILED if failed else EXIT_OK


def _spec(a, **extra) -> ExperimentSpec:
    return ExperimentSpec(
        algorithm=a.algorithm, n_c=a.nc, n=a.n, n_1=a.n1, ranks=a.ranks, mask_mode=a.mask_mode,
        losses=a.losses, corruption_mode=a.corruption_mode, alphas=a.alphas, trials=a.trials,
        base_seed=a.seed, threshold=a.threshold, amp_exponent=a.amp_exponent, damped=a.damped,
        min_sep=a.min_sep, boost_first=a.boost_first, beta=a.beta, max_iter=a.max_iter,
        output=a.out, **extra,
    )


def _run_sweep(a, runner, spec) -> int:
    res = runner(spec, threads=a.threads, out=a.out)
    if not a.json:
        print(",".join(res.header))
    for row in res.rows:
        if a.json:
            _emit(a, row)
        else:
            print(",".join(_fmt(row.get(h)) for h in res.header))
    if res.partial:
        print("interrupted: partial results written", file=sys.stderr)
        return EXIT_INTERRUPTED
    return EXIT_OK


def cmd_sweep(a) -> int:
    return _run_sweep(a, run_phase_sweep, _spec(a))


def cmd_noise_sweep(a) -> int:
    return _run_sweep(a, run_noise_sweep, _spec(a, noise_levels=a.noise_levels))


def cmd_hb_compare(a) -> int:
    return _run_sweep(a, run_heavyball_compare, _spec(a, betas=a.betas, tol_level=a.tol_level))


def cmd_verify(a) -> int:
    results = run_verify(seed=a.seed, scale=a.scale)
    for r in results:
        if a.json:
            print(json.dumps(io.to_jsonable(vars(r)), sort_keys=True))
        else:
            print(r.line())
    failed = [r.name for r in results if not r.passed]
    summary = f"{len(results) - len(failed)}/{len(results)} checks passed"
    print(summary if not a.json else json.dumps({"summary": summary, "failed": failed}))
    return EXIT_VERIFY if failed else EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "complete": cmd_complete,
    "robust": cmd_robust,
    "sweep": cmd_sweep,
    "noise-sweep": cmd_noise_sweep,
    "hb-compare": cmd_hb_compare,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        a = resolve(args)
        return COMMANDS[a.command](a)
    except (UsageError, ValueError, OSError, KeyError) as exc:
        print(f"mchankel {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except KeyboardInterrupt:
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    sys.exit(main())
