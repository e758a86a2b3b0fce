"""Command-line interface.

Verbs: run, bench-scaling, bench-regimes, verify, recover-info, report,
ewald-table.  Config keys load from a file, then HYDROBOX_* environment
variables, then repeated --set key=value flags.  Bench verbs write their
delimited tables and render quick-look figures next to them.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import SimConfig, load_config
from .errors import HydroboxError


def _add_config_args(sp):
    sp.add_argument("--config", help="path to a key = value config file")
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override one config key (repeatable)")


def _load(args) -> SimConfig:
    if args.config:
        return load_config(args.config, overrides=args.set)
    cfg = SimConfig()
    from .config import apply_key
    for item in args.set:
        key, _, value = item.partition("=")
        apply_key(cfg, key.strip(), value)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hydrobox",
                                     description="desk-scale periodic-box particle engine")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    sp = sub.add_parser("run", help="run n_pm_steps of the configured simulation")
    _add_config_args(sp)
    sp.add_argument("--auto-recover", action="store_true",
                    help="resume from the newest loadable checkpoint")

    sp = sub.add_parser("bench-scaling", help="strong/weak scaling over workers")
    _add_config_args(sp)
    sp.add_argument("--mode", choices=("strong", "weak"), default="weak")
    sp.add_argument("--workers", default="1,2,4,8")
    sp.add_argument("-o", "--out", default="scaling.tsv")

    sp = sub.add_parser("bench-regimes", help="workload-regime utilization study")
    _add_config_args(sp)
    sp.add_argument("-o", "--out", default="regimes.tsv")

    sp = sub.add_parser("verify", help="run the acceptance battery")
    _add_config_args(sp)
    sp.add_argument("--only", help="comma-separated check names")
    sp.add_argument("--workdir", default="verify_output")
    sp.add_argument("--inject-rcut-half", action="store_true",
                    help="seed a force-split defect (mutation control)")

    sp = sub.add_parser("recover-info", help="list loadable checkpoints")
    _add_config_args(sp)

    sp = sub.add_parser("report", help="render figures from a run's step log")
    sp.add_argument("log", help="steps.log path")
    sp.add_argument("-o", "--out", default="timeline.png")

    sp = sub.add_parser("ewald-table", help="regenerate the periodic-force table artifact")
    sp.add_argument("-o", "--out", default="data/ewald_table_v1.bin")
    sp.add_argument("--n", type=int, default=64)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        return _dispatch(args)
    except HydroboxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.verb == "run":
        from .driver import run_simulation
        cfg = _load(args)
        result = run_simulation(cfg, auto_recover=args.auto_recover)
        totals = result.ledger.phase_totals()
        print(f"completed step {result.final_step} "
              f"({totals['total']:.2f}s total, log: {result.log_path})")
        return 0

    if args.verb == "bench-scaling":
        from .driver import bench_scaling, scaling_table_text
        from .figures import plot_scaling
        cfg = _load(args)
        workers = [int(w) for w in args.workers.replace(",", " ").split()]
        rows = bench_scaling(cfg, args.mode, workers)
        text = scaling_table_text(rows)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        plot_scaling(rows, os.path.splitext(args.out)[0] + ".png", text)
        print(text, end="")
        return 0

    if args.verb == "bench-regimes":
        from .driver import bench_regimes, regime_report_text
        from .figures import plot_utilization
        cfg = _load(args)
        report = bench_regimes(cfg)
        text = regime_report_text(report)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        plot_utilization(report, os.path.splitext(args.out)[0] + ".png", text)
        print(text, end="")
        return 0

    if args.verb == "verify":
        from .checks import run_all
        names = args.only.split(",") if args.only else None
        kw = {}
        if args.inject_rcut_half:
            kw["r_cut_factor"] = 2.5
        results = run_all(args.workdir, names=names, **kw)
        for res in results:
            print(res.line())
        n_fail = sum(not r.passed for r in results)
        print(f"{len(results) - n_fail}/{len(results)} checks passed")
        return 0 if n_fail == 0 else 1

    if args.verb == "recover-info":
        from .tiered_io import TieredStore
        cfg = _load(args)
        if not cfg.io.tier1_root:
            cfg.io.tier1_root = os.path.join(cfg.output_root, "tier1")
        if not cfg.io.tier2_root:
            cfg.io.tier2_root = os.path.join(cfg.output_root, "tier2")
        store = TieredStore(cfg.io)
        found = False
        for root, label in ((cfg.io.tier1_root, "tier1"), (cfg.io.tier2_root, "tier2")):
            for step, epoch, path in store.list_checkpoints(root):
                state = "valid" if store.validate_checkpoint(path) else "INVALID"
                print(f"{label}: step {step} epoch {epoch} [{state}] {path}")
                found = True
        if not found:
            print("no checkpoints found")
        return 0

    if args.verb == "report":
        from .figures import plot_timeline
        from .ledger import parse_step_log
        with open(args.log, "r", encoding="utf-8") as fh:
            text = fh.read()
        records = parse_step_log(text)
        plot_timeline(records, args.out, text)
        print(f"{len(records)} steps -> {args.out}")
        return 0

    if args.verb == "ewald-table":
        from .ewald import build_table, save_table
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        table = build_table(n=args.n)
        meta = save_table(table, args.out)
        print(f"wrote {args.out} ({args.n}^3 samples, crc32c {meta['crc32c']})")
        return 0

    raise HydroboxError(f"unhandled verb {args.verb}")


if __name__ == "__main__":
    sys.exit(main())
