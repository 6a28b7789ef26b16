"""Run the type-I error / power study and print it in table layout."""

import argparse
import sys
from pathlib import Path

from lcfit.simharness import load_study_config, results_csv, run_study

DEFAULT = Path(__file__).resolve().parents[1] / "configs" / "table2_desk.cfg"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config", nargs="?", default=str(DEFAULT))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--csv", help="also write the results CSV here")
    args = ap.parse_args()

    cfg = load_study_config(args.config)
    progress = lambda i, n: print(f"\r{i}/{n}", end="", file=sys.stderr) if i % 20 == 0 or i == n else None
    res = run_study(cfg.conditions, cfg.R, cfg.specs, cfg.K, cfg.em, cfg.seed, args.workers, progress)
    print(file=sys.stderr)
    if args.csv:
        Path(args.csv).write_text(results_csv(res))

    names = [s.name for s in cfg.specs]
    print(f"{'C':>2} {'N':>5} {'pi':>4}  " + "".join(f"{n:>16}" for n in names))
    by_cond = {}
    for r in res:
        by_cond.setdefault(r.condition, {})[r.spec] = r
    for c, row in by_cond.items():
        cells = "".join(f"{row[n].rate:>9.3f}±{row[n].mc_se:.3f}" for n in names)
        print(f"{c.C_true:>2} {c.N:>5} {c.hi:>4}  {cells}")
    print(f"R={cfg.R} K={cfg.K} seed={cfg.seed}")


if __name__ == "__main__":
    main()
