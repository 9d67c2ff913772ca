"""Iterations to 1e-5 error and divergence counts for several heavy-ball weights.

    python3 scripts/hb_compare.py --losses 0.5 0.75 0.8 --trials 20
"""

import argparse

from mchankel.experiments import ExperimentSpec, run_heavyball_compare


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--losses", type=float, nargs="+", default=[0.5, 0.75, 0.8])
    ap.add_argument("--betas", nargs="+", default=["default", "0", "0.1", "0.3"])
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None)
    a = ap.parse_args()

    betas = tuple(None if b == "default" else float(b) for b in a.betas)
    spec = ExperimentSpec(losses=tuple(a.losses), betas=betas, trials=a.trials, base_seed=a.seed, min_sep=0.01)
    res = run_heavyball_compare(spec, out=a.out)
    print(f"{'loss':>5} {'beta':>6} {'median':>6} {'reached':>7} {'diverged':>8}")
    for row in res.rows:
        flag = "  (outside guarantee)" if row["flagged"] else ""
        print(
            f"{row['loss']:5.2f} {row['beta']:6.3f} {row['median_iters']:6.1f} "
            f"{row['reached']:7d} {row['diverged']:8d}{flag}"
        )


if __name__ == "__main__":
    main()
