"""Context-trace generation, the experiment driver, and report emission.

Traces come in three kinds: derivable (per-context sinusoids), quasi_noisy
(the same sinusoids plus slight Gaussian noise), and noisy (uniform over
the context domains). A run drives one schema over one trace, records every
step, and emits a CSV of step records plus a JSON report whose aggregates
are recomputable from the steps.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .adaptation_schemas import (
    KB_KIND_PR,
    KB_KIND_SR,
    MODE_REUSED,
    AdaptationEngine,
    DEFAULT_WARMUP,
)
from .domain_model import SystemModel, load_fixture
from .evolutionary_optimizer import GASettings
from .fuzzy_core import Flags
from .learning import FCMSettings, TrainerSettings

log = logging.getLogger(__name__)

TRACE_DERIVABLE = "derivable"
TRACE_QUASI_NOISY = "quasi_noisy"
TRACE_NOISY = "noisy"
TRACE_KINDS = (TRACE_DERIVABLE, TRACE_QUASI_NOISY, TRACE_NOISY)

SCHEMAS = ("fr", "br", "pr", "sr")

DEFAULT_THRESHOLD = 0.06
DEFAULT_THRESHOLD_SWEEP = (0.02, 0.04, 0.06, 0.08, 0.10)


class ConfigError(ValueError):
    """Invalid run or sweep configuration."""


@dataclass(frozen=True)
class TraceParams:
    """Per-context sinusoid generator: center + amplitude * sin(2*pi*t/period + phase)."""

    center: float
    amplitude: float
    period: float
    phase: float = 0.0
    sigma: float | None = None  # quasi-noisy stddev; default 2% of domain range

    def __post_init__(self):
        if self.period <= 0.0:
            raise ConfigError("period must be positive")
        if self.amplitude < 0.0:
            raise ConfigError("amplitude must be nonnegative")


@dataclass(frozen=True)
class ContextTrace:
    kind: str
    steps: np.ndarray  # (N, n_contexts)
    seed: int
    params: tuple[TraceParams, ...]


def default_trace_params(model: SystemModel) -> tuple[TraceParams, ...]:
    """Sinusoid defaults: distinct periods/phases per context, 35-40% swings."""
    presets = [(100.0, 0.0, 0.40), (50.0, math.pi / 3, 0.35), (100.0, math.pi / 2, 0.35), (25.0, math.pi, 0.35)]
    params = []
    for i, e in enumerate(model.contexts):
        lo, hi = e.lv.domain
        period, phase, frac = presets[i % len(presets)]
        params.append(
            TraceParams(center=0.5 * (lo + hi), amplitude=frac * (hi - lo), period=period, phase=phase)
        )
    return tuple(params)


def generate_trace(
    model: SystemModel,
    kind: str,
    steps: int,
    seed: int,
    params: tuple[TraceParams, ...] | None = None,
) -> ContextTrace:
    """Deterministic context trace of the requested kind."""
    if kind not in TRACE_KINDS:
        raise ConfigError(f"unknown trace kind {kind!r}")
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    params = params or default_trace_params(model)
    if len(params) != len(model.contexts):
        raise ConfigError(f"{len(params)} parameter sets for {len(model.contexts)} contexts")
    lows = model.context_space.lows
    highs = model.context_space.highs
    for p, lo, hi in zip(params, lows, highs):
        if p.amplitude > 0.5 * (hi - lo):
            raise ConfigError(f"amplitude {p.amplitude} exceeds half the range of [{lo}, {hi}]")

    rng = np.random.default_rng(seed)
    n_ctx = len(params)
    if kind == TRACE_NOISY:
        data = rng.uniform(lows, highs, size=(steps, n_ctx))
    else:
        t = np.arange(steps, dtype=float)[:, None]
        centers = np.array([p.center for p in params])
        amps = np.array([p.amplitude for p in params])
        periods = np.array([p.period for p in params])
        phases = np.array([p.phase for p in params])
        data = centers + amps * np.sin(2.0 * math.pi * t / periods + phases)
        if kind == TRACE_QUASI_NOISY:
            sigmas = np.array(
                [p.sigma if p.sigma is not None else 0.02 * (hi - lo) for p, lo, hi in zip(params, lows, highs)]
            )
            data = data + rng.normal(0.0, 1.0, size=data.shape) * sigmas
        data = np.clip(data, lows, highs)
    return ContextTrace(kind=kind, steps=data, seed=seed, params=tuple(params))


@dataclass(frozen=True)
class StepRecord:
    step: int
    mv: tuple[float, ...]
    cp: tuple[float, ...]
    sd_desired: tuple[float, ...]
    sd_actual: tuple[float, ...]
    deviation: float
    mode: str
    wall_time_s: float


@dataclass(frozen=True)
class RunConfig:
    schema: str
    context: str = TRACE_DERIVABLE
    steps: int = 500
    threshold: float = DEFAULT_THRESHOLD
    seed: int = 0
    warmup: int = DEFAULT_WARMUP
    model_path: str | None = None
    ga: GASettings = GASettings()
    trainer: TrainerSettings = TrainerSettings()
    fcm: FCMSettings = FCMSettings()

    def __post_init__(self):
        if self.schema not in SCHEMAS:
            raise ConfigError(f"unknown schema {self.schema!r}")
        if self.context not in TRACE_KINDS:
            raise ConfigError(f"unknown context kind {self.context!r}")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.warmup < 1:
            raise ConfigError("warmup must be >= 1")

    def digest(self) -> str:
        doc = asdict(self)
        blob = json.dumps(doc, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunReport:
    config: RunConfig
    records: list[StepRecord]
    aggregates: dict
    flags: list[tuple[str, str]]
    incomplete: bool = False
    engine_version: str = __version__

    @property
    def deviations(self) -> np.ndarray:
        return np.array([r.deviation for r in self.records])


def compute_aggregates(records: list[StepRecord], threshold: float | None) -> dict:
    """Aggregate metrics; recomputable from the step records."""
    if not records:
        return {
            "steps": 0,
            "mean_deviation": None,
            "median_deviation": None,
            "mode_counts": {},
            "success_count": None,
            "mean_wall_time_s": None,
            "mean_reused_wall_time_s": None,
        }
    deviations = [r.deviation for r in records]
    modes: dict[str, int] = {}
    for r in records:
        modes[r.mode] = modes.get(r.mode, 0) + 1
    reused = [r.wall_time_s for r in records if r.mode == MODE_REUSED]
    return {
        "steps": len(records),
        "mean_deviation": statistics.fmean(deviations),
        "median_deviation": statistics.median(deviations),
        "mode_counts": modes,
        "success_count": (
            sum(1 for d in deviations if d <= threshold) if threshold is not None else None
        ),
        "mean_wall_time_s": statistics.fmean(r.wall_time_s for r in records),
        "mean_reused_wall_time_s": statistics.fmean(reused) if reused else None,
    }


def run_experiment(
    config: RunConfig,
    model: SystemModel | None = None,
    trace: ContextTrace | None = None,
    engine: AdaptationEngine | None = None,
) -> RunReport:
    """Drive one schema over one trace and return the full report.

    A schema failure mid-run raises after attaching the partial, incomplete
    report to the exception (``partial_report`` attribute).
    """
    if model is None:
        model = load_fixture(config.model_path)
    if engine is None:
        engine = AdaptationEngine(
            model,
            ga_settings=config.ga,
            trainer_settings=config.trainer,
            fcm_settings=config.fcm,
            seed=config.seed,
        )
    if trace is None:
        trace = generate_trace(model, config.context, config.steps, seed=config.seed)
    flags = Flags()
    kb = None
    if config.schema == "pr":
        kb = engine.new_knowledge_base(KB_KIND_PR)
    elif config.schema == "sr":
        kb = engine.new_knowledge_base(KB_KIND_SR)

    records: list[StepRecord] = []
    t_start = time.perf_counter()
    try:
        for step, mv in enumerate(trace.steps):
            step_seed = _step_seed(config.seed, step)
            if config.schema == "fr":
                decision = engine.forward_reason(mv, flags=flags)
            elif config.schema == "br":
                decision = engine.backward_reason(mv, seed=step_seed, flags=flags)
            elif config.schema == "pr":
                decision = engine.pr_step(mv, config.threshold, kb, seed=step_seed, flags=flags)
            else:
                decision = engine.sr_step(
                    mv, config.threshold, config.warmup, kb, step + 1, seed=step_seed, flags=flags
                )
            records.append(
                StepRecord(
                    step=step,
                    mv=tuple(float(v) for v in mv),
                    cp=tuple(float(v) for v in decision.cp),
                    sd_desired=tuple(float(v) for v in decision.sd_desired),
                    sd_actual=tuple(float(v) for v in decision.sd_actual),
                    deviation=float(decision.deviation),
                    mode=decision.mode,
                    wall_time_s=float(decision.wall_time),
                )
            )
    except Exception as exc:
        report = RunReport(
            config=config,
            records=records,
            aggregates=compute_aggregates(records, config.threshold),
            flags=list(flags.events),
            incomplete=True,
        )
        exc.partial_report = report
        raise
    log.info(
        "%s/%s: %d steps in %.2fs (median deviation %.4g)",
        config.schema,
        config.context,
        len(records),
        time.perf_counter() - t_start,
        statistics.median(r.deviation for r in records),
    )
    return RunReport(
        config=config,
        records=records,
        aggregates=compute_aggregates(records, config.threshold),
        flags=list(flags.events),
    )


def _step_seed(seed: int, step: int) -> int:
    return int(np.random.SeedSequence((int(seed), int(step))).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Report emission

def csv_header(n_contexts: int = 4, n_tasks: int = 3, n_softgoals: int = 3) -> list[str]:
    return (
        ["step"]
        + [f"ac{i}" for i in range(1, n_contexts + 1)]
        + [f"cp{i}" for i in range(1, n_tasks + 1)]
        + [f"sd_d{i}" for i in range(1, n_softgoals + 1)]
        + [f"sd_a{i}" for i in range(1, n_softgoals + 1)]
        + ["deviation", "mode", "wall_time_s"]
    )


def emit_report(report: RunReport, out_dir) -> tuple[Path, Path]:
    """Write <name>.csv and <name>.json into out_dir; bit-stable per report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = f"{report.config.schema}_{report.config.context}_s{report.config.seed}"
    csv_path = out / f"{name}.csv"
    json_path = out / f"{name}.json"
    if report.records:
        first = report.records[0]
        header = csv_header(len(first.mv), len(first.cp), len(first.sd_desired))
    else:
        header = csv_header()
    try:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for r in report.records:
                writer.writerow(
                    [r.step, *r.mv, *r.cp, *r.sd_desired, *r.sd_actual, r.deviation, r.mode, r.wall_time_s]
                )
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(report_to_dict(report), fh, indent=1)
    except OSError as exc:
        raise ConfigError(f"cannot write report to {exc.filename or out}: {exc.strerror}") from exc
    return csv_path, json_path


def report_to_dict(report: RunReport) -> dict:
    return {
        "engine_version": report.engine_version,
        "config": asdict(report.config),
        "config_digest": report.config.digest(),
        "incomplete": report.incomplete,
        "aggregates": report.aggregates,
        "flags": [list(ev) for ev in report.flags],
        "steps": [asdict(r) for r in report.records],
    }


def load_report(path) -> RunReport:
    """Load a JSON report and verify its aggregates against the step records."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    cfg_doc = doc["config"]
    config = RunConfig(
        schema=cfg_doc["schema"],
        context=cfg_doc["context"],
        steps=cfg_doc["steps"],
        threshold=cfg_doc["threshold"],
        seed=cfg_doc["seed"],
        warmup=cfg_doc["warmup"],
        model_path=cfg_doc["model_path"],
        ga=GASettings(**cfg_doc["ga"]),
        trainer=TrainerSettings(**cfg_doc["trainer"]),
        fcm=FCMSettings(**cfg_doc["fcm"]),
    )
    records = [
        StepRecord(
            step=r["step"],
            mv=tuple(r["mv"]),
            cp=tuple(r["cp"]),
            sd_desired=tuple(r["sd_desired"]),
            sd_actual=tuple(r["sd_actual"]),
            deviation=r["deviation"],
            mode=r["mode"],
            wall_time_s=r["wall_time_s"],
        )
        for r in doc["steps"]
    ]
    report = RunReport(
        config=config,
        records=records,
        aggregates=doc["aggregates"],
        flags=[tuple(ev) for ev in doc["flags"]],
        incomplete=doc["incomplete"],
        engine_version=doc["engine_version"],
    )
    recomputed = compute_aggregates(records, config.threshold)
    if recomputed != report.aggregates:
        raise ConfigError(f"{path}: stored aggregates disagree with step records")
    return report


def sweep(
    schemas,
    contexts,
    thresholds,
    steps: int = 500,
    seed: int = 0,
    model: SystemModel | None = None,
    out_dir=None,
    warmup: int = DEFAULT_WARMUP,
) -> list[RunReport]:
    """Grid of runs over schemas x contexts x thresholds.

    Threshold only differentiates runs for the learning schemas; fr/br run
    once per context with the default threshold.
    """
    if model is None:
        model = load_fixture()
    reports = []
    for schema in schemas:
        schema_thresholds = thresholds if schema in ("pr", "sr") else [DEFAULT_THRESHOLD]
        for context in contexts:
            for threshold in schema_thresholds:
                config = RunConfig(
                    schema=schema,
                    context=context,
                    steps=steps,
                    threshold=threshold,
                    seed=seed,
                    warmup=warmup,
                )
                report = run_experiment(config, model=model)
                reports.append(report)
                if out_dir is not None:
                    sub = Path(out_dir) / f"threshold_{threshold:g}" if schema in ("pr", "sr") else Path(out_dir)
                    emit_report(report, sub)
    return reports
