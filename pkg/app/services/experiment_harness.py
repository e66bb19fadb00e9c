import logging
import math
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import brentq

from app import __version__
from app.core.exceptions import ConfigError, NumericalError
from app.models.experiment import (
    ExperimentConfig,
    OptimizerSection,
    RobustnessAxes,
    RunManifest,
    ScanMode,
    ScanResult,
    SweepRow,
    TimeSweepSpec,
)
from app.models.metrics import FidelityReport
from app.models.optimizer import OptimizationResult
from app.models.propagation import TrajectoryRecord
from app.models.pulse import ControlParams, GaussianStirapParams, ProtocolVariant, PulseSchedule
from app.services.cmaes_optimizer import optimize
from app.services.metrics import transfer_report
from app.services.propagation import propagate_lindblad, propagate_state
from app.services.pulse_synthesis import (
    gaussian_envelopes,
    make_protocol_schedule,
    sample_dressed,
    sample_envelopes,
    sample_schedule,
    sta_dressed_pulses,
)
from app.services.qudit_model import (
    collapse_operators,
    ground_state,
    hamiltonian_function,
    initial_density_matrix,
)
from app.utils.io import RunArtifacts

logger = logging.getLogger(__name__)

CALIBRATION_TARGET = 0.981
CALIBRATION_TIME = 500.0   # ns


def _n_jobs(threads: int) -> int:
    return -1 if threads == 0 else threads


def _uses_lindblad(cfg: ExperimentConfig) -> bool:
    return cfg.decoherence_enabled or cfg.transmon.thermal_pop1 > 0


def _manifest(
    cfg: ExperimentConfig,
    operation: str,
    started: float,
    artifacts: RunArtifacts,
    report: Optional[FidelityReport] = None,
    **extra,
) -> RunManifest:
    return RunManifest(
        tool_version=__version__,
        operation=operation,
        timestamp=datetime.now(timezone.utc).isoformat(),
        config=cfg.model_dump(mode="json"),
        seed=cfg.seed,
        report=report,
        files=artifacts.listed(),
        duration_s=time.perf_counter() - started,
        extra=extra,
    )


def params_at(cfg: ExperimentConfig, total_time: float, omega0: Optional[float] = None) -> GaussianStirapParams:
    '''The configured pulse family at a new duration (δτ and σ rescale with T).'''
    params = cfg.pulse.with_total_time(total_time)
    if omega0 is not None:
        params = GaussianStirapParams(**{**params.model_dump(), "omega0": omega0})
    return params


def build_schedule(
    cfg: ExperimentConfig,
    control: Optional[ControlParams] = None,
    variant: Optional[ProtocolVariant] = None,
) -> PulseSchedule:
    variant = ProtocolVariant(variant or cfg.protocol)
    control = control if control is not None else cfg.control
    return make_protocol_schedule(variant, cfg.pulse, control, cfg.transmon)


def simulate_schedule(cfg: ExperimentConfig, schedule: PulseSchedule) -> TrajectoryRecord:
    '''Propagate a schedule from the configured initial state, closed or open as the config requires.'''
    spec = cfg.transmon
    h_of_t = hamiltonian_function(spec, schedule, cfg.propagation.frame)
    if _uses_lindblad(cfg):
        collapse = collapse_operators(spec) if cfg.decoherence_enabled else []
        return propagate_lindblad(h_of_t, collapse, initial_density_matrix(spec), schedule.total_time, cfg.propagation)
    return propagate_state(h_of_t, ground_state(spec), schedule.total_time, cfg.propagation)


def evaluate_transfer(
    cfg: ExperimentConfig,
    control: Optional[ControlParams] = None,
    variant: Optional[ProtocolVariant] = None,
) -> FidelityReport:
    '''Score one schedule without touching the filesystem.'''
    return transfer_report(simulate_schedule(cfg, build_schedule(cfg, control, variant)))


class TransferCost:
    '''Optimizer cost 1 − F of the stirsap_opt schedule at a candidate (α_p, α_s, β_p, β_s).'''

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg

    def __call__(self, x) -> float:
        control = ControlParams.from_vector(x)
        return evaluate_transfer(self.cfg, control, ProtocolVariant.STIRSAP_OPT).cost


def _resolve_control(cfg: ExperimentConfig) -> Optional[ControlParams]:
    if cfg.protocol != ProtocolVariant.STIRSAP_OPT or cfg.control is not None:
        return cfg.control
    logger.info("No control parameters configured for stirsap_opt; optimizing first")
    control, _ = optimize_protocol(cfg, write=False)
    return control


def run_transfer(
    cfg: ExperimentConfig, write: bool = True
) -> Tuple[TrajectoryRecord, FidelityReport, Optional[RunManifest]]:
    started = time.perf_counter()
    control = _resolve_control(cfg)
    traj = simulate_schedule(cfg, build_schedule(cfg, control))
    report = transfer_report(traj)
    logger.info(
        f"{cfg.protocol.value} transfer at T = {cfg.pulse.total_time} ns: "
        f"fidelity {report.fidelity:.6f}, leakage {report.leakage:.3e}"
    )
    if not write:
        return traj, report, None

    with RunArtifacts(cfg.output_dir) as artifacts:
        header = ["t_ns"] + [f"pop{n}" for n in range(traj.dim)]
        artifacts.write_csv(
            "trajectory.csv", header,
            ([t, *pops] for t, pops in zip(traj.times, traj.populations)),
        )
        extra = {"warnings": traj.warnings}
        if control is not None:
            extra["control"] = control.model_dump()
        manifest = _manifest(cfg, "simulate", started, artifacts, report, **extra)
        artifacts.write_manifest(manifest)
    return traj, report, manifest


def optimize_protocol(
    cfg: ExperimentConfig, write: bool = True
) -> Tuple[ControlParams, OptimizationResult]:
    '''CMA-ES over (α_p, α_s, β_p, β_s) for the stirsap_opt schedule at the configured duration.'''
    started = time.perf_counter()
    section = cfg.optimizer or OptimizerSection()
    loop_cfg = cfg if section.keep_decoherence else cfg.with_updates(decoherence_enabled=False)
    config = section.cmaes_config(seed=cfg.seed, workers=cfg.threads)
    logger.info(
        f"Optimizing stirsap_opt at T = {cfg.pulse.total_time} ns "
        f"(population {config.population}, budget {config.max_evaluations}, seed {cfg.seed})"
    )
    result = optimize(TransferCost(loop_cfg), config)
    best = ControlParams.from_vector(result.best_params)
    logger.info(f"Best control {best.as_vector().tolist()} with fidelity {1 - result.best_cost:.6f}")
    if not write:
        return best, result

    with RunArtifacts(cfg.output_dir) as artifacts:
        report = evaluate_transfer(cfg, best, ProtocolVariant.STIRSAP_OPT)
        if section.write_logs:
            artifacts.write_csv(
                "optimizer_log.csv", ["generation", "eval_count", "best_cost", "median_cost", "sigma"],
                ([g.generation, g.evaluations, g.best_cost, g.median_cost, g.sigma] for g in result.history),
            )
            artifacts.write_csv(
                "optimizer_candidates.csv",
                ["generation", "index"] + [f"x{i}" for i in range(config.dimension)] + ["cost"],
                ([e.generation, e.index, *e.x, e.cost] for e in result.candidates),
            )
        manifest = _manifest(
            cfg, "optimize", started, artifacts, report,
            control=best.model_dump(),
            termination=result.termination.value,
            evaluations=result.evaluations,
            best_cost=result.best_cost,
        )
        artifacts.write_manifest(manifest)
    return best, result


def _sweep_point(
    cfg: ExperimentConfig, omega0: float, total_time: float, variant: ProtocolVariant,
    control: Optional[ControlParams],
) -> SweepRow:
    try:
        point_cfg = cfg.with_updates(pulse=params_at(cfg, total_time, omega0), threads=1)
        if variant == ProtocolVariant.STIRSAP_OPT and control is None:
            control, _ = optimize_protocol(point_cfg, write=False)
        report = evaluate_transfer(point_cfg, control, variant)
        return SweepRow(T_ns=total_time, variant=variant, fidelity=report.fidelity, leakage=report.leakage)
    except Exception as e:
        logger.warning(f"Sweep point T = {total_time} ns, {variant.value} failed: {e}")
        return SweepRow(T_ns=total_time, variant=variant, fidelity=math.nan, leakage=math.nan, error=str(e))


def sweep_total_time(
    cfg: ExperimentConfig,
    spec: TimeSweepSpec,
    variants: Sequence[ProtocolVariant],
    control: Optional[ControlParams] = None,
    write: bool = True,
) -> List[SweepRow]:
    '''
    Transfer fidelity against total time for each variant.
    stirsap_opt is re-optimized at every T unless a control is supplied.
    '''
    started = time.perf_counter()
    control = control if control is not None else cfg.control
    points = [(t, ProtocolVariant(v)) for t in spec.times for v in variants]
    logger.info(f"Sweeping {len(spec.times)} durations × {len(variants)} variants (T0 = {spec.reference_period:.4f} ns)")
    rows = list(Parallel(n_jobs=_n_jobs(cfg.threads))(
        delayed(_sweep_point)(cfg, spec.omega0, t, v, control) for t, v in points
    ))
    if write:
        with RunArtifacts(cfg.output_dir) as artifacts:
            artifacts.write_csv(
                "sweep.csv", ["T_ns", "variant", "fidelity", "leakage", "error"],
                ([r.T_ns, r.variant, r.fidelity, r.leakage, r.error] for r in rows),
            )
            manifest = _manifest(
                cfg, "sweep-time", started, artifacts,
                times=list(spec.times), omega0=spec.omega0, reference_period=spec.reference_period,
                failed_points=sum(1 for r in rows if r.error),
            )
            artifacts.write_manifest(manifest)
    return rows


def _scan_cell(cfg: ExperimentConfig, axes: RobustnessAxes, mode: ScanMode, err_p: float, err_s: float) -> float:
    try:
        control = axes.perturbed(mode, err_p, err_s)
        return evaluate_transfer(cfg, control, ProtocolVariant.STIRSAP_OPT).fidelity
    except Exception as e:
        logger.warning(f"Scan cell ({err_p}, {err_s}) in {mode.value} mode failed: {e}")
        return math.nan


def default_axes(cfg: ExperimentConfig, reference: ControlParams) -> RobustnessAxes:
    return RobustnessAxes(eta_values=cfg.scan.eta_values, delta_values=cfg.scan.delta_values, reference=reference)


def robustness_scan(
    cfg: ExperimentConfig, axes: RobustnessAxes, mode: ScanMode, write: bool = True
) -> ScanResult:
    '''
    Fidelity over a 2-D grid of per-tone errors around the reference control.
    AMPLITUDE perturbs α_k → (1 − η_k)·α_k; DETUNING perturbs β_k → β_k + δ_k.
    '''
    started = time.perf_counter()
    mode = ScanMode(mode)
    values = axes.values_for(mode)
    cells = [(p, s) for p in values for s in values]
    logger.info(f"Robustness scan ({mode.value}): {len(values)}×{len(values)} cells")
    flat = list(Parallel(n_jobs=_n_jobs(cfg.threads))(
        delayed(_scan_cell)(cfg, axes, mode, p, s) for p, s in cells
    ))
    n = len(values)
    result = ScanResult(
        mode=mode, err_p=list(values), err_s=list(values),
        fidelity=[flat[i * n:(i + 1) * n] for i in range(n)],
    )
    if write:
        with RunArtifacts(cfg.output_dir) as artifacts:
            header = ["err_p", "err_s", "fidelity"]
            artifacts.write_csv(f"grid_{mode.value}.csv", header, result.rows())
            artifacts.write_csv(f"antidiagonal_{mode.value}.csv", header, result.antidiagonal())
            manifest = _manifest(
                cfg, f"scan-robustness-{mode.value}", started, artifacts,
                reference=axes.reference.model_dump(),
                failed_cells=int(np.sum(np.isnan(flat))),
            )
            artifacts.write_manifest(manifest, name=f"manifest_{mode.value}.json")
    return result


def emit_pulses(cfg: ExperimentConfig) -> List[Path]:
    '''Envelope CSVs: raw Gaussian pair, dressed pulses with Ω_cd and ζ, and the final stirsap_opt schedule.'''
    started = time.perf_counter()
    pair = gaussian_envelopes(cfg.pulse)
    control = cfg.control or ControlParams.identity()
    with RunArtifacts(cfg.output_dir) as artifacts:
        t, p, s = sample_envelopes(pair)
        artifacts.write_csv("pulses_stirap.csv", ["t_ns", "omega_p", "omega_s"], zip(t, p, s))
        artifacts.write_csv(
            "pulses_stirsap.csv", ["t_ns", "omega_p_tilde", "omega_s_tilde", "omega_cd", "zeta"],
            zip(*sample_dressed(sta_dressed_pulses(pair))),
        )
        schedule = make_protocol_schedule(ProtocolVariant.STIRSAP_OPT, cfg.pulse, control, cfg.transmon)
        artifacts.write_csv("pulses_stirsap_opt.csv", ["t_ns", "omega_p", "omega_s"], zip(*sample_schedule(schedule)))
        artifacts.write_manifest(_manifest(cfg, "pulses", started, artifacts, control=control.model_dump()))
        return [Path(f) for f in artifacts.listed()]


def _with_uniform_t1(cfg: ExperimentConfig, t1: float) -> ExperimentConfig:
    spec = cfg.transmon.model_dump()
    spec["t1_times"] = [t1] * (cfg.transmon.level_count - 1)
    return cfg.with_updates(transmon=spec, decoherence_enabled=True)


def calibrate_uniform_t1(
    cfg: ExperimentConfig,
    target: float = CALIBRATION_TARGET,
    total_time: float = CALIBRATION_TIME,
    bracket: Tuple[float, float] = (1e3, 1e7),
    variant: ProtocolVariant = ProtocolVariant.STIRAP,
    write: bool = True,
) -> float:
    '''
    Uniform T1 (ns, all decay channels) at which the given protocol of duration total_time
    reaches the target fidelity under Lindblad evolution. stirsap_opt uses the config control.
    '''
    started = time.perf_counter()
    variant = ProtocolVariant(variant)
    base = cfg.with_updates(pulse=params_at(cfg, total_time), protocol=variant)

    def residual(t1: float) -> float:
        fidelity = evaluate_transfer(_with_uniform_t1(base, t1), cfg.control, variant).fidelity
        logger.info(f"T1 = {t1:.4e} ns -> fidelity {fidelity:.6f}")
        return fidelity - target

    lo, hi = bracket
    f_lo, f_hi = residual(lo), residual(hi)
    if f_lo * f_hi > 0:
        raise NumericalError(f"target fidelity {target} is not bracketed by T1 ∈ [{lo}, {hi}] ns")
    t1 = float(brentq(residual, lo, hi, xtol=1e-3 * lo, rtol=1e-6))
    logger.info(f"Calibrated uniform T1 = {t1:.6e} ns")
    if write:
        with RunArtifacts(cfg.output_dir) as artifacts:
            artifacts.write_manifest(_manifest(
                _with_uniform_t1(base, t1), "calibrate-t1", started, artifacts,
                t1_ns=t1, target=target, total_time=total_time, variant=variant.value,
            ))
    return t1


def time_sweep_spec(cfg: ExperimentConfig, omega0: Optional[float] = None) -> TimeSweepSpec:
    if cfg.sweep is None:
        raise ConfigError("sweep-time needs a [sweep] section")
    return TimeSweepSpec(times=cfg.sweep.resolved_times(), omega0=omega0 or cfg.pulse.omega0)

