"""Command-line entry point (``wams-tsa`` / ``python -m wams_tsa``).

Exit codes: 0 success, 1 bad input file, 2 configuration error, 3 numerical
failure.  The output directory is, in order of precedence, ``--out``, the
``WAMS_TSA_OUTPUT_DIR`` environment variable, then ``output_dir`` from the
config.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import csvio, experiment, phy
from .config import config_from_mapping, load_config
from .errors import ConfigError, CsvParseError, NumericalError, WamsTsaError
from .plot import emit_plot

ENV_OUTPUT_DIR = "WAMS_TSA_OUTPUT_DIR"

log = logging.getLogger("wams_tsa.cli")


def _thresholds(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wams-tsa", description="Time-synchronization attack detection simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log attack buffer events")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seeds=False):
        sp.add_argument("--config", type=Path, help="YAML or JSON experiment file (defaults if omitted)")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--mode", choices=("cross", "upper"), help="cross-layer (with eta) or upper layer only")
        sp.add_argument("--phy-neutral", action="store_true", help="fix eta = 0.5 for every non-target PMU")
        sp.add_argument("--no-phy", action="store_true", help="disable the physical layer")
        if seeds:
            sp.add_argument("--seeds", type=int, help="number of Monte Carlo runs (seeds 0..K-1)")
            sp.add_argument("--workers", type=int, default=1, help="worker processes")

    sp = sub.add_parser("simulate", help="one seeded run; writes a per-slot trace CSV")
    common(sp)
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("mc", help="Monte Carlo runs; writes a per-seed summary CSV")
    common(sp, seeds=True)

    sp = sub.add_parser("cdf", help="identification-delay CDF")
    common(sp, seeds=True)

    sp = sub.add_parser("roc", help="mean delay and false-alarm rate per threshold")
    common(sp, seeds=True)
    sp.add_argument("--thresholds", type=_thresholds, help="comma-separated, e.g. 0.5,0.9,0.99")

    sp = sub.add_parser("phy-calibrate", help="fit the C/No statistic laws and write the model and ROC")
    sp.add_argument("--config", type=Path)
    sp.add_argument("--out", type=Path)
    sp.add_argument("--epochs", type=int, help="calibration epochs per hypothesis")
    sp.add_argument("--seed", type=int, help="calibration seed")

    sp = sub.add_parser("plot", help="render a CSV artifact to SVG")
    sp.add_argument("csv", type=Path)
    sp.add_argument("--kind", choices=("trace", "cdf", "roc"), required=True)
    sp.add_argument("-o", "--output", type=Path, help="SVG path (default: CSV path with .svg)")
    return p


def _load(args) -> experiment.ExperimentConfig:
    cfg = load_config(args.config) if args.config else config_from_mapping({})
    phy_cfg = cfg.phy
    if getattr(args, "no_phy", False):
        phy_cfg = None
    elif getattr(args, "phy_neutral", False):
        if phy_cfg is None:
            raise ConfigError("--phy-neutral needs the physical layer enabled", "phy.enabled")
        phy_cfg = experiment.PhyConfig(phy_cfg.scenes, phy_cfg.patterns, phy_cfg.model, True,
                                       phy_cfg.spoof_mode, phy_cfg.calibration_epochs,
                                       phy_cfg.calibration_seed)
    changes = {"phy": phy_cfg}
    if getattr(args, "seeds", None) is not None:
        if args.seeds < 1:
            raise ConfigError("must be >= 1", "--seeds")
        changes["n_seeds"] = args.seeds
    if getattr(args, "thresholds", None):
        changes["thresholds"] = args.thresholds
    cfg = cfg.with_(**changes)
    if getattr(args, "mode", None) == "cross" and cfg.phy is None:
        raise ConfigError("cross-layer mode needs the physical layer enabled", "--mode")
    return cfg


def _out_dir(args, cfg_dir: str) -> Path:
    if getattr(args, "out", None) is not None:
        return args.out
    return Path(os.environ.get(ENV_OUTPUT_DIR) or cfg_dir)


def _cmd_simulate(args):
    cfg = _load(args)
    rec = experiment.Engine(cfg).run(args.seed)
    path = _out_dir(args, cfg.output_dir) / f"trace_seed{args.seed}.csv"
    csvio.write_trace(path, rec, args.mode)
    det = rec.first_crossing(None, args.mode)
    if det is None:
        print(f"no detection within {cfg.horizon} slots")
    else:
        kind = "false alarm" if det.false_alarm else "target identified"
        print(f"PMU {det.pmu + 1} crossed {cfg.detect_threshold} at slot {det.slot} ({kind})")
    print(path)


def _records(args, cfg):
    return experiment.monte_carlo(cfg, cfg.n_seeds, workers=args.workers)


def _cmd_mc(args):
    cfg = _load(args)
    recs = _records(args, cfg)
    path = _out_dir(args, cfg.output_dir) / "summary.csv"
    csvio.write_summary(path, recs, args.mode)
    delays = experiment.identification_delays(recs, mode=args.mode)
    hit = sum(1 for d in delays if d != float("inf"))
    print(f"{hit}/{len(recs)} runs identified the target")
    print(path)


def _cmd_cdf(args):
    cfg = _load(args)
    rows = experiment.delay_cdf(_records(args, cfg), mode=args.mode)
    path = _out_dir(args, cfg.output_dir) / f"cdf_{args.mode or 'default'}.csv"
    csvio.write_cdf(path, rows)
    print(path)


def _cmd_roc(args):
    cfg = _load(args)
    rows = experiment.delay_fa_from_records(_records(args, cfg), cfg.thresholds, args.mode)
    path = _out_dir(args, cfg.output_dir) / f"roc_{args.mode or 'default'}.csv"
    csvio.write_roc(path, rows)
    print(path)


def _cmd_phy_calibrate(args):
    cfg = load_config(args.config) if args.config else config_from_mapping({})
    if cfg.phy is None:
        raise ConfigError("physical layer is disabled", "phy.enabled")
    p = cfg.phy
    epochs = p.calibration_epochs if args.epochs is None else args.epochs
    seed = p.calibration_seed if args.seed is None else args.seed
    p = experiment.PhyConfig(p.scenes, p.patterns, None, p.neutral, p.spoof_mode, epochs, seed)
    cal = experiment.calibrate_phy(p)
    out = _out_dir(args, cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cal.model.save(out / "spoof_pdf.json")
    phy.write_roc_csv(out / "phy_roc.csv", cal.thresholds, cal.roc())
    print(f"AUC {phy.auc(cal.roc()):.6f}")
    print(out / "spoof_pdf.json")
    print(out / "phy_roc.csv")


def _cmd_plot(args):
    print(emit_plot(args.csv, args.kind, args.output))


_COMMANDS = {
    "simulate": _cmd_simulate,
    "mc": _cmd_mc,
    "cdf": _cmd_cdf,
    "roc": _cmd_roc,
    "phy-calibrate": _cmd_phy_calibrate,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except (CsvParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except WamsTsaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
