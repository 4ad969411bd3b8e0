"""Sweep the fixed-seed MLP experiment over seeds and codifications.

Used to pick the end-to-end thresholds frozen in the acceptance suite:
prints max error (in output steps) and SQNR for each run, then the worst case.

    python3 scripts/mlp_quality.py --seeds 20
"""
import argparse

from prequant.experiments import MlpConfig, run_mlp
from prequant.patterns import Codification


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--dims", type=int, nargs=4, default=[784, 32, 32, 10])
    args = p.parse_args()
    worst_steps, worst_sqnr = 0.0, float("inf")
    print(f"{'seed':>4} {'cod':>5} {'max_steps':>10} {'mean_abs':>10} {'sqnr_db':>8} {'sat':>4}")
    for seed in range(args.seeds):
        for cod in Codification:
            r = run_mlp(MlpConfig(dims=tuple(args.dims), seed=seed, codification=cod))
            print(f"{seed:>4} {cod.value:>5} {r.max_error_steps:>10.3f} {r.mean_abs_error:>10.5f} "
                  f"{r.sqnr_db:>8.2f} {r.saturated:>4}")
            worst_steps = max(worst_steps, r.max_error_steps)
            worst_sqnr = min(worst_sqnr, r.sqnr_db)
    print(f"worst: max_error_steps {worst_steps:.3f}, sqnr {worst_sqnr:.2f} dB")


if __name__ == "__main__":
    main()
