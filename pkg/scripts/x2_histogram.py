"""Histogram data of replicate X2 under the 2-class MI model (K=500), with the observed value marked."""

import argparse
from pathlib import Path

from lcfit.cli import load_mi
from lcfit.lcmodel import fit_em
from lcfit.resampler import TestConfig, histogram_export, run_fit_test
from lcfit.statistics import PearsonOverall


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--replicates", type=int, default=500)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--bins", type=int, default=25)
    ap.add_argument("--out", default="x2_hist.csv")
    args = ap.parse_args()

    table = load_mi()
    rep = run_fit_test(table, fit_em(table, 2), TestConfig(args.replicates, args.seed, (PearsonOverall(),)))
    hist = histogram_export(rep, "x2", args.bins)
    Path(args.out).write_text(hist.to_csv())
    peak = max(hist.counts)
    for lo, n in zip(hist.edges[:-1], hist.counts):
        mark = " <" if lo <= hist.observed < lo + (hist.edges[1] - hist.edges[0]) else ""
        print(f"{lo:8.1f} {'#' * round(40 * n / peak)}{mark}")
    print(f"observed X2={hist.observed:.3f} p_upper={rep['x2'].p_upper:.3f} K={rep.K} -> {args.out}")


if __name__ == "__main__":
    main()
