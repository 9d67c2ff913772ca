"""Success-rate grid of AM-FIHT (or RAM-FIHT / SAP) over rank and loss.

    python3 scripts/phase_sweep.py --out phase.csv --trials 20
"""

import argparse

from mchankel.experiments import ExperimentSpec, run_phase_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--algorithm", default="am_fiht")
    ap.add_argument("--ranks", type=int, nargs="+", default=[2, 4, 6, 8, 10])
    ap.add_argument("--losses", type=float, nargs="+", default=[0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    ap.add_argument("--mask-mode", default="M1")
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="phase.csv")
    a = ap.parse_args()

    spec = ExperimentSpec(
        algorithm=a.algorithm, ranks=tuple(a.ranks), losses=tuple(a.losses), mask_mode=a.mask_mode,
        trials=a.trials, base_seed=a.seed, min_sep=0.01,
    )
    res = run_phase_sweep(spec, threads=a.threads, out=a.out)

    # rank down, loss across
    print("r \\ loss " + " ".join(f"{x:5.2f}" for x in spec.losses))
    for r in spec.ranks:
        rates = [row["success_rate"] for row in res.rows if row["r"] == r]
        print(f"{r:8d} " + " ".join(f"{x:5.2f}" for x in rates))
    print(f"wrote {a.out}" + (" (partial)" if res.partial else ""))


if __name__ == "__main__":
    main()
