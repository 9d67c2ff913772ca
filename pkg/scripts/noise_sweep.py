"""Recovery error against noise level for AM-FIHT and RAM-FIHT.

    python3 scripts/noise_sweep.py --trials 20
"""

import argparse

from mchankel.experiments import ExperimentSpec, run_noise_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=float, nargs="+", default=[1e-4, 1e-3, 1e-2, 1e-1])
    ap.add_argument("--loss", type=float, default=0.5)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None, help="CSV path; one file per algorithm gets a suffix")
    a = ap.parse_args()

    print(f"{'algorithm':>9} {'sigma/E_x':>9} {'mean err':>9} {'ratio':>6}")
    for alg in ("am_fiht", "ram_fiht"):
        spec = ExperimentSpec(
            algorithm=alg, losses=(a.loss,), noise_levels=tuple(a.levels), trials=a.trials,
            base_seed=a.seed, min_sep=0.01,
        )
        out = f"{a.out}.{alg}.csv" if a.out else None
        for row in run_noise_sweep(spec, out=out).rows:
            print(f"{alg:>9} {row['noise_level']:9.0e} {row['mean_err']:9.2e} {row['ratio']:6.2f}")


if __name__ == "__main__":
    main()
