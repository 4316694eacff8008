"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 bad configuration or usage.
Output files default to ``$CANDFREE_OUTPUT_DIR`` (or ``./runs``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import nn
from .acquisition import AcquisitionStrategy
from .config import ConfigError, RunConfig, RunMode, derive_seed, load_config
from .datasets import ImbalanceSpec, make_imbalanced, synth_blobs, write_synth
from .loop import run_many
from .report import (
    RunReport,
    UnreadableReportError,
    compare,
    curve_rows,
    load_report,
    summary_row,
    write_comparison_csv,
    write_curves_csv,
)

OUTPUT_ENV = "CANDFREE_OUTPUT_DIR"
GRADCHECK_TOL = 1e-4
# small shapes keep the finite-difference sweep fast
GRADCHECK_SHAPES = {"mlp-small": ((8,), 3), "cnn-small": ((1, 7, 7), 3)}


class UsageError(Exception):
    pass


def output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def _print_report(report: RunReport) -> None:
    for rep in report.replicates:
        for rec in rep.records:
            print(
                f"{report.method} rep={rep.replicate} iter={rec.iteration} phase={rec.phase} "
                f"labels={rec.labels_used} acc={rec.accuracy:.4f} "
                f"select_s={rec.selection_s:.3f} train_s={rec.train_s:.3f}"
            )
    std = report.final_accuracy_std
    print(
        f"{report.method}: final accuracy {report.final_accuracy_mean:.4f}"
        + ("" if std is None else f" +- {std:.4f}")
        + f" over {len(report.replicates)} replicate(s)"
    )


def _load(args, mode: RunMode | None = None) -> RunConfig:
    cfg = load_config(args.config)
    try:
        cfg = cfg.with_overrides(
            strategy=getattr(args, "strategy", None),
            seed=getattr(args, "seed", None),
            replicates=getattr(args, "replicates", None),
            mode=mode,
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad override: {exc}") from exc
    return cfg


def _default_report_path(cfg: RunConfig) -> Path:
    suffix = "-candidate" if cfg.mode is RunMode.CANDIDATE else ""
    return output_dir() / f"{cfg.strategy.label}{suffix}-seed{cfg.seed}.json"


def cmd_run(args, mode: RunMode | None = None) -> int:
    cfg = _load(args, mode)
    report = run_many([cfg], args.workers)[0]
    out = Path(args.out) if args.out else _default_report_path(cfg)
    report.save(out)
    _print_report(report)
    print(f"report written to {out}")
    if getattr(args, "against", None):
        free = load_report(args.against)
        cmp = compare(free, report)
        csv_path = Path(args.compare_out) if args.compare_out else out.with_suffix(".compare.csv")
        write_comparison_csv(cmp.rows, csv_path)
        print(f"time saved {cmp.time_saved_h:.6f} h, accuracy delta {cmp.accuracy_delta:+.4f}; table in {csv_path}")
    return 0


def cmd_baseline(args) -> int:
    return cmd_run(args, RunMode.CANDIDATE)


def cmd_ablate(args) -> int:
    cfg = _load(args)
    cfg = replace(cfg, mode=RunMode.CANDIDATE_FREE)
    cfgs = [replace(cfg, strategy=s) for s in cfg.sweep()]
    reports = run_many(cfgs, args.workers)
    rows = []
    report_dir = Path(args.reports_dir) if args.reports_dir else output_dir() / "ablation"
    for c, rep in zip(cfgs, reports):
        rep.save(report_dir / f"{c.strategy.label}-seed{c.seed}.json")
        rows.append(summary_row(rep))
        print(f"{rep.method}: {rep.final_accuracy_mean:.4f}")
    out = Path(args.out) if args.out else output_dir() / "ablation.csv"
    write_comparison_csv(rows, out)
    print(f"table written to {out}")
    return 0


def cmd_curves(args) -> int:
    reports = [load_report(p) for p in args.reports]
    rows = curve_rows(reports)
    out = Path(args.out) if args.out else output_dir() / "curves.csv"
    write_curves_csv(rows, out)
    print(f"{len(rows)} curve points written to {out}")
    return 0


def gradcheck_preset(name: str, seed: int = 0, epsilon: float = 1e-5) -> dict[str, float]:
    if name not in GRADCHECK_SHAPES:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(GRADCHECK_SHAPES)}")
    shape, k = GRADCHECK_SHAPES[name]
    model = nn.init_random(nn.preset(name, shape, k), seed)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2,) + shape)
    y = rng.integers(0, k, size=2)
    return nn.grad_check_layers(model, (x, y), epsilon)


def cmd_gradcheck(args) -> int:
    errors = gradcheck_preset(args.preset, args.seed, args.epsilon)
    failed = False
    for layer, err in errors.items():
        ok = err < GRADCHECK_TOL
        failed |= not ok
        print(f"{args.preset} {layer}: max rel error {err:.3e} {'ok' if ok else 'FAIL'}")
    return 1 if failed else 0


def _parse_imbalance(text: str) -> ImbalanceSpec:
    try:
        major, minor, ratio = text.split(":")
        return ImbalanceSpec(int(major), int(minor), float(ratio))
    except ValueError as exc:
        raise ConfigError(f"--imbalance wants MAJOR:MINOR:RATIO, got {text!r}") from exc


def cmd_synth(args) -> int:
    try:
        train, test = synth_blobs(args.classes, args.n_per_class, args.dim, args.separation, args.noise, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    manifest = {
        "generator": "synth_blobs",
        "classes": args.classes,
        "n_per_class": args.n_per_class,
        "dim": args.dim,
        "separation": args.separation,
        "noise": args.noise,
        "seed": args.seed,
        "imbalance": None,
    }
    if args.imbalance:
        spec = _parse_imbalance(args.imbalance)
        train = make_imbalanced(train, spec, derive_seed(args.seed, "imbalance"))
        manifest["imbalance"] = spec.to_dict()
    out = Path(args.out) if args.out else output_dir() / "synth"
    write_synth(out, train, test, manifest)
    print(f"wrote {len(train)} train / {len(test)} test samples to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="candfree", description="Candidate-model-free active learning runs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add_run_args(sp):
        sp.add_argument("config")
        sp.add_argument("--strategy")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--replicates", type=int)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out")

    sp = sub.add_parser("run", help="run the configured mode")
    add_run_args(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("baseline", help="run in candidate-model mode")
    add_run_args(sp)
    sp.add_argument("--against", help="candidate-free report to compare with")
    sp.add_argument("--compare-out")
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("ablate", help="sweep acquisition strategies")
    sp.add_argument("config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out")
    sp.add_argument("--reports-dir")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("curves", help="accuracy-vs-labels CSV from reports")
    sp.add_argument("reports", nargs="+")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_curves)

    sp = sub.add_parser("gradcheck", help="finite-difference check of a preset")
    sp.add_argument("preset")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--epsilon", type=float, default=1e-5)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("synth", help="generate a synthetic blob dataset with manifest")
    sp.add_argument("--classes", type=int, default=10)
    sp.add_argument("--n-per-class", type=int, default=2500)
    sp.add_argument("--dim", type=int, default=32)
    sp.add_argument("--separation", type=float, default=3.5)
    sp.add_argument("--noise", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--imbalance", help="MAJOR:MINOR:RATIO")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except UnreadableReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
