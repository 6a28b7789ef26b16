"""Command line interface: ``lcfit {fit,test,bootstrap,simulate,hist}``."""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
import warnings
from importlib import resources
from pathlib import Path

from . import __version__
from .bootstrap import UnsupportedSpecError, parametric_bootstrap
from .contingency import DataError, PatternTable, parse_pattern_counts, read_table
from .lcmodel import EmConfig, FitResult, IdentifiabilityWarning, ModelError, dumps, fit_em, loads
from .resampler import TestConfig, TestReport, histogram_export, run_fit_test
from .simharness import load_study_config, results_csv, run_study
from .statistics import MI_SPECS, SpecError, parse_specs, risk_stat

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NONCONVERGED = 3
EXIT_UNSUPPORTED = 4

MI_N = 94
MI_RISK = {1: 61, 2: 46, 3: 36, 4: 24}


class InputError(Exception):
    pass


# ------------------------------------------------------------------ #
# Data loading
# ------------------------------------------------------------------ #


def load_mi() -> PatternTable:
    """Bundled myocardial infarction table, checked against its known N and risk counts."""
    text = resources.files("lcfit").joinpath("data/mi_rindskopf.counts").read_text()
    table = parse_pattern_counts(text)
    if table.J != 4 or table.N != MI_N:
        raise DataError(f"bundled MI table has J={table.J}, N={table.N}; expected J=4, N={MI_N}")
    for q, expected in MI_RISK.items():
        got = risk_stat(table, q)
        if got != expected:
            raise DataError(f"bundled MI table: risk:{q} = {got}, expected {expected}")
    return table


def load_data(spec: str, fmt: str = "auto") -> PatternTable:
    if spec in ("mi", "builtin:mi"):
        return load_mi()
    try:
        return read_table(spec, fmt)
    except OSError as exc:
        raise InputError(f"cannot read {spec}: {exc.strerror or exc}") from None
    except DataError as exc:
        raise InputError(f"{spec}: {exc}") from None


def _file_digest(path: str) -> str | None:
    p = Path(path)
    if not p.is_file():
        return None
    return hashlib.sha256(p.read_bytes()).hexdigest()


def _em_config(args) -> EmConfig:
    return EmConfig(max_iters=args.max_iters, tol=args.tol, n_starts=args.starts, seed=args.seed)


def _fit(table: PatternTable, C: int, em: EmConfig) -> FitResult:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IdentifiabilityWarning)
        fit = fit_em(table, C, em)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return fit


def _model(args, table: PatternTable):
    if getattr(args, "model", None):
        try:
            params = loads(Path(args.model).read_text())
        except OSError as exc:
            raise InputError(f"cannot read {args.model}: {exc.strerror or exc}") from None
        except ModelError as exc:
            raise InputError(f"{args.model}: {exc}") from None
        if params.J != table.J:
            raise InputError(f"model J={params.J} does not match data J={table.J}")
        return params, None
    if args.classes is None:
        raise InputError("either --model or --classes is required")
    fit = _fit(table, args.classes, _em_config(args))
    return fit.params, fit


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text)


def _manifest(args, argv, timings: dict, outputs: list[str]) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",)}
    inputs = {}
    for key in ("data", "model", "config"):
        val = cfg.get(key)
        if val in ("mi", "builtin:mi"):
            blob = resources.files("lcfit").joinpath("data/mi_rindskopf.counts").read_bytes()
            inputs[key] = {"path": "builtin:mi", "sha256": hashlib.sha256(blob).hexdigest()}
        elif val:
            inputs[key] = {"path": val, "sha256": _file_digest(val)}
    return {
        "command": args.command,
        "argv": list(argv),
        "inputs": inputs,
        "config": cfg,
        "seed": cfg.get("seed"),
        "tool": "lcfit",
        "version": __version__,
        "python": platform.python_version(),
        "outputs": outputs,
        "timings_ms": timings,
    }


def _emit_manifest(args, argv, timings, outputs) -> None:
    man = json.dumps(_manifest(args, argv, timings, outputs), indent=2, default=str) + "\n"
    path = args.manifest or (args.out + ".manifest.json" if getattr(args, "out", None) else None)
    if path:
        Path(path).write_text(man)
    else:
        sys.stderr.write(man)


# ------------------------------------------------------------------ #
# Subcommands
# ------------------------------------------------------------------ #


def cmd_fit(args, argv) -> int:
    t0 = time.perf_counter()
    table = load_data(args.data, args.data_format)
    fit = _fit(table, args.classes, _em_config(args))
    text = dumps(fit.params, fit.loglik)
    outputs = []
    if args.out:
        _write(args.out, text)
        outputs.append(args.out)
    else:
        sys.stdout.write(text)
    status = "converged" if fit.converged else "NOT converged"
    print(
        f"C={args.classes} loglik={fit.loglik:.6f} iters={fit.iters} {status} "
        f"(best of {fit.n_starts_run} starts, start #{fit.start_index})",
        file=sys.stderr if not args.out else sys.stdout,
    )
    _emit_manifest(args, argv, {"total": (time.perf_counter() - t0) * 1e3}, outputs)
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


def _print_report(report: TestReport) -> None:
    print(f"{'statistic':<12}{'observed':>14}{'p_upper':>10}{'p_lower':>10}")
    for r in report.results:
        obs = f"{r.observed:.3f}" if r.spec.is_chi_squared else f"{int(r.observed)}"
        print(f"{r.name:<12}{obs:>14}{r.p_upper:>10.3f}{r.p_lower:>10.3f}")
    print(f"K={report.K} seed={report.seed}")


def _run_test(args):
    table = load_data(args.data, args.data_format)
    specs = parse_specs(args.specs)
    for s in specs:
        try:
            s.check(table.J)
        except SpecError as exc:
            raise SpecError(f"{exc} (token {s.name!r})") from None
    params, fit = _model(args, table)
    config = TestConfig(args.replicates, args.seed, tuple(specs))
    return run_fit_test(table, fit if fit is not None else params, config, threads=args.threads), fit


def cmd_test(args, argv) -> int:
    t0 = time.perf_counter()
    report, fit = _run_test(args)
    outputs = []
    if args.out:
        _write(args.out, report.to_json() if args.format == "json" else report.to_csv())
        outputs.append(args.out)
    if args.replicates_out:
        _write(args.replicates_out, report.replicates_csv())
        outputs.append(args.replicates_out)
    if args.hist_out:
        _write(args.hist_out, histogram_export(report, report.results[0].spec, args.bins).to_csv())
        outputs.append(args.hist_out)
    _print_report(report)
    _emit_manifest(args, argv, {"total": (time.perf_counter() - t0) * 1e3}, outputs)
    if fit is not None and not fit.converged:
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_hist(args, argv) -> int:
    t0 = time.perf_counter()
    args.specs = [args.spec]
    report, fit = _run_test(args)
    hist = histogram_export(report, report.results[0].spec, args.bins)
    text = hist.to_csv()
    outputs = []
    if args.out:
        _write(args.out, text)
        outputs.append(args.out)
    else:
        sys.stdout.write(text)
    r = report.results[0]
    print(f"{r.name}: observed={r.observed!r} p_upper={r.p_upper:.3f} K={report.K}", file=sys.stderr)
    _emit_manifest(args, argv, {"total": (time.perf_counter() - t0) * 1e3}, outputs)
    return EXIT_OK


def cmd_bootstrap(args, argv) -> int:
    t0 = time.perf_counter()
    table = load_data(args.data, args.data_format)
    specs = parse_specs(args.specs)
    config = TestConfig(args.replicates, args.seed, tuple(specs))
    report = parametric_bootstrap(table, args.classes, config, _em_config(args), threads=args.threads)
    outputs = []
    if args.out:
        _write(args.out, report.to_json())
        outputs.append(args.out)
    once = report.fit_once
    print(f"{'statistic':<12}{'observed':>14}{'boot p':>10}{'fit-once p':>12}")
    for r in report.results:
        p1 = once[r.name].p_upper if once is not None else float("nan")
        print(f"{r.name:<12}{r.observed:>14.3f}{r.p_upper:>10.3f}{p1:>12.3f}")
    print(
        f"K={report.K} seed={report.seed} fit-once {report.fit_once_ms:.0f} ms, "
        f"bootstrap {report.bootstrap_ms:.0f} ms, ratio {report.ratio:.1f}x"
    )
    if report.nonconverged:
        print(f"warning: {report.nonconverged} replicate refits did not converge", file=sys.stderr)
    _emit_manifest(
        args,
        argv,
        {"total": (time.perf_counter() - t0) * 1e3, "fit_once": report.fit_once_ms, "bootstrap": report.bootstrap_ms},
        outputs,
    )
    return EXIT_OK


def cmd_simulate(args, argv) -> int:
    t0 = time.perf_counter()
    try:
        study = load_study_config(args.config)
    except OSError as exc:
        raise InputError(f"cannot read {args.config}: {exc.strerror or exc}") from None
    except (KeyError, ValueError) as exc:
        raise InputError(f"{args.config}: bad study config: {exc}") from None
    R = args.repetitions or study.R
    K = args.replicates or study.K
    seed = study.seed if args.seed is None else args.seed

    def progress(i, n):
        if args.verbose and (i % 50 == 0 or i == n):
            print(f"  {i}/{n} datasets", file=sys.stderr)

    results = run_study(study.conditions, R, study.specs, K, study.em, seed, workers=args.threads, progress=progress)
    text = results_csv(results)
    outputs = []
    if args.out:
        _write(args.out, text)
        outputs.append(args.out)
    else:
        sys.stdout.write(text)
    if args.out:
        for res in results:
            c = res.condition
            print(f"C={c.C_true} N={c.N:<5} hi={c.hi:<4} {res.spec:<8} {res.rate:.3f} ± {res.mc_se:.3f}")
    _emit_manifest(args, argv, {"total": (time.perf_counter() - t0) * 1e3}, outputs)
    return EXIT_OK


# ------------------------------------------------------------------ #
# Parser
# ------------------------------------------------------------------ #


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lcfit", description=__doc__)
    p.add_argument("--version", action="version", version=f"lcfit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True, em=True):
        if data:
            sp.add_argument("--data", required=True, help="row CSV, pattern-count file, or 'mi' for the bundled table")
            sp.add_argument("--data-format", choices=("auto", "rows", "counts"), default="auto")
        sp.add_argument("--seed", type=int, default=None if not data else 0)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", help="output file")
        sp.add_argument("--manifest", help="run manifest path (default: <out>.manifest.json, else stderr)")
        if em:
            sp.add_argument("--starts", type=int, default=20, help="EM random starts")
            sp.add_argument("--max-iters", type=int, default=5000)
            sp.add_argument("--tol", type=float, default=1e-10)

    sp = sub.add_parser("fit", help="fit a latent class model by EM")
    common(sp)
    sp.add_argument("--classes", type=int, required=True)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("test", help="fit-once resampling test")
    common(sp)
    sp.add_argument("--model", help="fitted model file (else fit with --classes)")
    sp.add_argument("--classes", type=int)
    sp.add_argument("--specs", nargs="+", default=[MI_SPECS])
    sp.add_argument("--replicates", type=int, default=1000, help="K")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--replicates-out", help="CSV of every replicate value")
    sp.add_argument("--hist-out", help="histogram CSV for the first spec")
    sp.add_argument("--bins", type=int, default=20)
    sp.set_defaults(func=cmd_test)

    sp = sub.add_parser("bootstrap", help="parametric bootstrap with per-replicate refits")
    common(sp)
    sp.add_argument("--classes", type=int, required=True)
    sp.add_argument("--specs", nargs="+", default=["x2 g2 x2:1,2 x2:1,3 x2:1,4 x2:2,3 x2:2,4 x2:3,4"])
    sp.add_argument("--replicates", type=int, default=1000, help="K")
    sp.add_argument("--format", choices=("json",), default="json")
    sp.set_defaults(func=cmd_bootstrap)

    sp = sub.add_parser("simulate", help="Monte Carlo type-I error / power study")
    sp.add_argument("config", help="study config (INI)")
    common(sp, data=False, em=False)
    sp.add_argument("--repetitions", type=int, help="override R")
    sp.add_argument("--replicates", type=int, help="override K")
    sp.add_argument("--format", choices=("csv",), default="csv")
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("hist", help="histogram data of one statistic's replicate distribution")
    common(sp)
    sp.add_argument("--model")
    sp.add_argument("--classes", type=int)
    sp.add_argument("--spec", default="x2")
    sp.add_argument("--replicates", type=int, default=500, help="K")
    sp.add_argument("--bins", type=int, default=20)
    sp.add_argument("--format", choices=("csv",), default="csv")
    sp.set_defaults(func=cmd_hist)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, argv)
    except UnsupportedSpecError as exc:
        print(f"error: unsupported statistic: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, DataError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
