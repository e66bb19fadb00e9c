import argparse
import json
import logging
import sys
from typing import List, Optional

from app import __version__
from app.core.exceptions import ConfigError, OutputError, StirsapError
from app.models.experiment import ScanMode
from app.models.propagation import Frame
from app.models.pulse import ProtocolVariant
from app.services.experiment_harness import (
    CALIBRATION_TARGET,
    CALIBRATION_TIME,
    calibrate_uniform_t1,
    default_axes,
    emit_pulses,
    optimize_protocol,
    robustness_scan,
    run_transfer,
    sweep_total_time,
    time_sweep_spec,
)
from app.utils.config import apply_overrides, load_experiment_config, settings

logger = logging.getLogger("app.cli")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Experiment config (TOML or JSON)")
    common.add_argument("--seed", type=_u64, default=None, help="Override the config seed")
    common.add_argument("--out", default=None, help="Output directory")
    common.add_argument("--threads", type=int, default=None, help="Worker processes, 0 = all cores")
    common.add_argument("--frame", choices=[f.value for f in Frame], default=None, help="Propagation frame")

    parser = argparse.ArgumentParser(prog="stirsap", description="STIRAP / STIRSAP pulse toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=settings.log_level, help="Logging level (default from STIRSAP_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("pulses", parents=[common], help="Write raw and dressed envelope CSVs")
    sub.add_parser("simulate", parents=[common], help="Run one transfer and write trajectory.csv")
    sub.add_parser("optimize", parents=[common], help="CMA-ES over amplitudes and detunings")

    sweep = sub.add_parser("sweep-time", parents=[common], help="Fidelity against total time")
    sweep.add_argument("--omega0", type=float, default=None, help="Fixed Ω_0 (rad/ns) for the sweep")
    sweep.add_argument("--variants", nargs="+", choices=[v.value for v in ProtocolVariant], default=None)

    scan = sub.add_parser("scan-robustness", parents=[common], help="Amplitude/detuning error grids")
    scan.add_argument("--mode", choices=["amplitude", "detuning", "both"], default="both")

    calibrate = sub.add_parser("calibrate-t1", parents=[common], help="Fit a uniform T1 to a target transfer fidelity")
    calibrate.add_argument("--target", type=float, default=CALIBRATION_TARGET)
    calibrate.add_argument("--total-time", type=float, default=CALIBRATION_TIME)
    calibrate.add_argument("--variant", choices=[v.value for v in ProtocolVariant], default="stirap")
    return parser


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, default=str))


def _run(args: argparse.Namespace) -> None:
    cfg = apply_overrides(
        load_experiment_config(args.config),
        seed=args.seed, out=args.out, threads=args.threads, frame=args.frame,
    )

    if args.command == "pulses":
        _emit({"files": [str(p) for p in emit_pulses(cfg)]})

    elif args.command == "simulate":
        _, report, manifest = run_transfer(cfg)
        _emit({"report": report.model_dump(), "files": manifest.files})

    elif args.command == "optimize":
        control, result = optimize_protocol(cfg)
        _emit({
            "control": control.model_dump(),
            "best_cost": result.best_cost,
            "evaluations": result.evaluations,
            "termination": result.termination.value,
        })

    elif args.command == "sweep-time":
        spec = time_sweep_spec(cfg, args.omega0)
        variants = [ProtocolVariant(v) for v in args.variants] if args.variants else cfg.sweep.variants
        rows = sweep_total_time(cfg, spec, variants)
        _emit({"rows": [r.model_dump(mode="json") for r in rows]})

    elif args.command == "scan-robustness":
        reference = cfg.control
        if reference is None:
            if cfg.optimizer is None:
                raise ConfigError("scan-robustness needs a [control] reference or an [optimizer] section")
            reference, _ = optimize_protocol(cfg, write=False)
        axes = default_axes(cfg, reference)
        modes = [ScanMode.AMPLITUDE, ScanMode.DETUNING] if args.mode == "both" else [ScanMode(args.mode)]
        summary = {}
        for mode in modes:
            result = robustness_scan(cfg, axes, mode)
            summary[mode.value] = {"cells": len(result.rows())}
        _emit(summary)

    elif args.command == "calibrate-t1":
        t1 = calibrate_uniform_t1(cfg, target=args.target, total_time=args.total_time, variant=args.variant)
        _emit({"t1_ns": t1, "target": args.target, "variant": args.variant})


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=str(args.log_level).upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except StirsapError as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        return e.exit_code
    except ValueError as e:
        logger.error(f"{args.command} rejected its input: {e}", exc_info=True)
        return ConfigError.exit_code
    except OSError as e:
        logger.error(f"{args.command} could not write its output: {e}", exc_info=True)
        return OutputError.exit_code
    except Exception as e:
        logger.error(f"{args.command} failed unexpectedly: {e}", exc_info=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
