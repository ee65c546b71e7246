"""End-to-end orchestration: CSV ingestion, per-sensor detection, reports.

The four-step flow per sensor is extract -> detect -> estimate -> localize.
The baseline distribution g is always learned from a pre-damage training
file; in "known" mode the post-damage distribution f comes from a second
training file, in "adaptive" mode it is estimated from the monitored stream
itself. All outputs are flat files and deterministic given the inputs.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import shearsim
from .detector import DetectorState, GeometricPrior, detect, update
from .errors import ConfigError, ShmSeqError
from .estimator import AdaptiveDetector, fit_predamage
from .features import DsfConfig, SignalChunk, extract_dsf_stream, iter_chunks, select_order
from .localization import SensorOutcome, build_report

EXIT_CLEAN = 0
EXIT_ERROR = 1
EXIT_DETECTED = 2


@dataclass
class PipelineConfig:
    """Run settings; every field can come from a JSON config file or a CLI flag."""

    input_csv: str = ""
    training_csv: str = ""
    output_dir: str = "out"
    chunk_size: int = 1600
    order: int | str = "auto"
    p_max: int = 12
    coef_indices: tuple[int, ...] | None = None
    alpha: float = 1e-5
    rho: float = 1e-5
    mode: str = "adaptive"  # "known" | "adaptive"
    postdamage_csv: str | None = None
    metadata_json: str | None = None
    lambda_true: int | None = None
    positions: dict[str, str] = field(default_factory=dict)
    warmup: int | None = None  # adaptive mode: steps before detection is allowed (default m+1)
    dump_dsf: bool = False
    dump_estimates: bool = False
    max_workers: int = 4

    def validate(self) -> None:
        if not self.input_csv or not self.training_csv:
            raise ConfigError("input_csv and training_csv are required")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie strictly between 0 and 1")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError("rho must lie strictly between 0 and 1")
        if self.mode not in ("known", "adaptive"):
            raise ConfigError("mode must be 'known' or 'adaptive'")
        if self.mode == "known" and not self.postdamage_csv:
            raise ConfigError("known mode needs postdamage_csv to learn f from")
        if isinstance(self.order, str):
            if self.order != "auto":
                raise ConfigError("order must be an integer or 'auto'")
            if self.p_max < 1:
                raise ConfigError("p_max must be >= 1")
            if self.chunk_size <= self.p_max + 1:
                raise ConfigError("chunk_size must exceed p_max + 1")
        else:
            if self.order < 1:
                raise ConfigError("order must be >= 1")
            if self.chunk_size <= self.order + 1:
                raise ConfigError("chunk_size must exceed order + 1")

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(data) - known
        if bad:
            raise ConfigError(f"unknown config keys: {sorted(bad)}")
        cfg = cls(**data)
        if cfg.coef_indices is not None:
            cfg.coef_indices = tuple(int(i) for i in cfg.coef_indices)
        return cfg


def read_signal_csv(path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Strict reader for `time,sensor_<id>,...` files; errors cite the row."""
    try:
        fh = open(path, newline="")
    except OSError as err:
        raise ConfigError(f"{path}: {err}") from err
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0] != "time":
            raise ConfigError(f"{path}: row 1: header must be 'time,sensor_<id>,...'")
        for name in header[1:]:
            if not name.startswith("sensor_") or not name[len("sensor_") :].isdigit():
                raise ConfigError(f"{path}: row 1: bad sensor column name {name!r}")
        columns: list[list[float]] = [[] for _ in header]
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ConfigError(
                    f"{path}: row {row_no}: expected {len(header)} fields, got {len(row)}"
                )
            for j, cell in enumerate(row):
                try:
                    columns[j].append(float(cell))
                except ValueError:
                    raise ConfigError(
                        f"{path}: row {row_no}: cannot parse {cell!r} as a number"
                    ) from None
        if not columns[0]:
            raise ConfigError(f"{path}: no data rows")
    time = np.asarray(columns[0])
    return time, {name: np.asarray(col) for name, col in zip(header[1:], columns[1:])}


def _sensor_id(column: str) -> int:
    return int(column[len("sensor_") :])


@dataclass
class SensorRun:
    column: str
    sensor_id: int
    position: str
    trace: list[tuple[int, float]] = field(default_factory=list)
    detection_time: int | None = None
    outcome: SensorOutcome | None = None
    final_posterior: float = 0.0
    estimates: list[tuple[int, np.ndarray, np.ndarray]] = field(default_factory=list)
    dsfs: list = field(default_factory=list)
    error: str | None = None


@dataclass
class RunResult:
    exit_code: int
    summary: dict
    localization: dict
    output_dir: str
    paths: dict


def _resolve_metadata(config: PipelineConfig) -> PipelineConfig:
    if not config.metadata_json:
        return config
    try:
        with open(config.metadata_json) as fh:
            meta = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"{config.metadata_json}: {err}") from err
    positions = dict(config.positions)
    for entry in meta.get("sensors", []):
        positions.setdefault(entry["column"], entry.get("position", entry["column"]))
    lam = config.lambda_true if config.lambda_true is not None else meta.get("lambda_chunk")
    return replace(config, positions=positions, lambda_true=lam)


def _training_chunks(signals: dict[str, np.ndarray], chunk_size: int) -> list[SignalChunk]:
    chunks = []
    for col, samples in signals.items():
        chunks.extend(iter_chunks(samples, chunk_size, sensor_id=_sensor_id(col)))
    if not chunks:
        raise ConfigError("training data is shorter than one chunk")
    return chunks


def _process_sensor(
    run: SensorRun,
    stream: np.ndarray,
    training: np.ndarray,
    postdamage: np.ndarray | None,
    dsf_config: DsfConfig,
    config: PipelineConfig,
) -> SensorRun:
    prior = GeometricPrior(config.rho)
    train_dsfs = extract_dsf_stream(training, dsf_config, sensor_id=run.sensor_id)
    g = fit_predamage(train_dsfs)
    dsfs = extract_dsf_stream(stream, dsf_config, sensor_id=run.sensor_id)
    if config.dump_dsf:
        run.dsfs = dsfs

    if config.mode == "known":
        post_dsfs = extract_dsf_stream(postdamage, dsf_config, sensor_id=run.sensor_id)
        f = fit_predamage(post_dsfs)
        state = DetectorState(sensor_id=run.sensor_id)
        for x in dsfs:
            state = update(state, x, g, f, prior)
            detect(state, config.alpha)
            run.trace.append((state.step, state.posterior))
        run.detection_time = state.detection_time
        run.final_posterior = state.posterior
        run.outcome = SensorOutcome(
            sensor_id=run.sensor_id,
            position=run.position,
            pre=g,
            post=f,
            detection_time=state.detection_time,
        )
    else:
        det = AdaptiveDetector(
            g, prior, config.alpha, sensor_id=run.sensor_id, warmup=config.warmup
        )
        for x in dsfs:
            posterior = det.update(x)
            run.trace.append((det.step, posterior))
            if config.dump_estimates and det.is_ready:
                est = det.params_estimate
                run.estimates.append((det.step, est.mean.copy(), est.cov.copy()))
        run.detection_time = det.detection_time
        run.final_posterior = det.posterior
        run.outcome = SensorOutcome(
            sensor_id=run.sensor_id,
            position=run.position,
            pre=g,
            post=det.params_estimate if det.is_ready else None,
            detection_time=det.detection_time,
        )
    return run


def run(config: PipelineConfig) -> RunResult:
    """Execute the full pipeline and write trace/summary/localization files."""
    config.validate()
    config = _resolve_metadata(config)
    _, train_signals = read_signal_csv(config.training_csv)
    _, input_signals = read_signal_csv(config.input_csv)
    missing = [c for c in input_signals if c not in train_signals]
    if missing:
        raise ConfigError(f"training data lacks columns {missing}")
    post_signals = None
    if config.mode == "known":
        _, post_signals = read_signal_csv(config.postdamage_csv)
        missing = [c for c in input_signals if c not in post_signals]
        if missing:
            raise ConfigError(f"post-damage training data lacks columns {missing}")

    if isinstance(config.order, str):
        order = select_order(_training_chunks(train_signals, config.chunk_size), config.p_max)
    else:
        order = config.order
    dsf_config = DsfConfig(
        chunk_size=config.chunk_size, order=order, coef_indices=config.coef_indices
    )

    columns = list(input_signals)
    runs = []
    for col in columns:
        runs.append(
            SensorRun(
                column=col,
                sensor_id=_sensor_id(col),
                position=config.positions.get(col, col),
            )
        )

    def work(run_obj: SensorRun) -> SensorRun:
        try:
            return _process_sensor(
                run_obj,
                input_signals[run_obj.column],
                train_signals[run_obj.column],
                post_signals[run_obj.column] if post_signals is not None else None,
                dsf_config,
                config,
            )
        except ShmSeqError as err:
            run_obj.error = str(err)
            return run_obj

    workers = max(1, min(config.max_workers, len(runs)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        runs = list(pool.map(work, runs))

    good = [r for r in runs if r.error is None]
    if not good:
        raise ConfigError(
            "every sensor failed: " + "; ".join(f"{r.column}: {r.error}" for r in runs)
        )

    report = build_report([r.outcome for r in good], alpha=config.alpha, rho=config.rho)
    summary = _summarize(runs, config, order)
    paths = _write_outputs(config, runs, report, summary)
    exit_code = EXIT_DETECTED if any(r.detection_time is not None for r in good) else EXIT_CLEAN
    return RunResult(
        exit_code=exit_code,
        summary=summary,
        localization=report.to_dict(),
        output_dir=config.output_dir,
        paths=paths,
    )


def _summarize(runs: list[SensorRun], config: PipelineConfig, order: int) -> dict:
    sensors = []
    for r in sorted(runs, key=lambda r: r.sensor_id):
        entry: dict = {"sensor_id": r.sensor_id, "position": r.position}
        if r.error is not None:
            entry["error"] = r.error
        else:
            entry["tau"] = r.detection_time
            entry["final_posterior"] = r.final_posterior
            if config.lambda_true is not None:
                entry["lambda_true"] = config.lambda_true
                if r.detection_time is None:
                    entry["delay"] = None
                    entry["false_alarm"] = False
                elif r.detection_time < config.lambda_true:
                    # declared before the true change: a false alarm, not a negative delay
                    entry["delay"] = None
                    entry["false_alarm"] = True
                else:
                    entry["delay"] = r.detection_time - config.lambda_true
                    entry["false_alarm"] = False
        sensors.append(entry)
    return {
        "mode": config.mode,
        "alpha": config.alpha,
        "rho": config.rho,
        "chunk_size": config.chunk_size,
        "order": order,
        "detected": any(r.detection_time is not None for r in runs if r.error is None),
        "sensors": sensors,
    }


def _write_outputs(config, runs, report, summary) -> dict:
    os.makedirs(config.output_dir, exist_ok=True)
    paths = {
        "trace": os.path.join(config.output_dir, "trace.csv"),
        "summary": os.path.join(config.output_dir, "summary.json"),
        "localization": os.path.join(config.output_dir, "localization.json"),
    }
    with open(paths["trace"], "w", newline="") as fh:
        fh.write("sensor_id,step,posterior,ccdf\n")
        for r in sorted(runs, key=lambda r: r.sensor_id):
            for step, posterior in r.trace:
                fh.write(
                    f"{r.sensor_id},{step},{format(posterior, '.12g')},"
                    f"{format(1.0 - posterior, '.12g')}\n"
                )
    with open(paths["summary"], "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(paths["localization"], "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if config.dump_dsf:
        paths["dsf"] = os.path.join(config.output_dir, "dsf.csv")
        _write_dsf(paths["dsf"], runs)
    if config.dump_estimates and config.mode == "adaptive":
        paths["estimates"] = os.path.join(config.output_dir, "estimates.csv")
        _write_estimates(paths["estimates"], runs)
    return paths


def _write_dsf(path, runs) -> None:
    dims = {r.dsfs[0].dim for r in runs if r.dsfs}
    m = max(dims) if dims else 0
    with open(path, "w", newline="") as fh:
        fh.write("sensor_id,step," + ",".join(f"coef_{i}" for i in range(1, m + 1)) + "\n")
        for r in sorted(runs, key=lambda r: r.sensor_id):
            for v in r.dsfs:
                vals = ",".join(format(c, ".12g") for c in v.values)
                fh.write(f"{r.sensor_id},{v.step},{vals}\n")


def _write_estimates(path, runs) -> None:
    ms = {est[1].size for r in runs for est in r.estimates}
    m = max(ms) if ms else 0
    header = ["sensor_id", "step"]
    header += [f"mu_hat_{i}" for i in range(1, m + 1)]
    header += [f"sigma_hat_{i}_{j}" for i in range(1, m + 1) for j in range(1, m + 1)]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in sorted(runs, key=lambda r: r.sensor_id):
            for step, mu, cov in r.estimates:
                cells = [str(r.sensor_id), str(step)]
                cells += [format(v, ".12g") for v in mu]
                cells += [format(v, ".12g") for v in cov.ravel()]
                fh.write(",".join(cells) + "\n")


def gen(scenario: dict | str, out_dir: str, seed: int | None = None) -> dict:
    """Generate a labeled data set from a scenario description (dict or JSON path)."""
    if isinstance(scenario, str):
        try:
            with open(scenario) as fh:
                scenario = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"{scenario}: {err}") from err
    try:
        stories = int(scenario["stories"])
        masses = np.broadcast_to(np.asarray(scenario["masses"], dtype=float), (stories,))
        stiffnesses = np.broadcast_to(np.asarray(scenario["stiffnesses"], dtype=float), (stories,))
        model = shearsim.ShearFrameModel(
            masses=masses.copy(),
            stiffnesses=stiffnesses.copy(),
            zeta=scenario.get("zeta", 0.02),
        )
        damage = scenario.get("damage")
        if damage:
            dmg = shearsim.DamageScenario(
                story=int(damage["story"]),
                retention=float(damage["r"]),
                lambda_chunk=int(damage["lambda_chunk"]),
            )
        else:
            dmg = shearsim.DamageScenario.undamaged()
        exc_cfg = scenario["excitation"]
        excitation = shearsim.Excitation(
            seed=int(exc_cfg["seed"]) if seed is None else int(seed),
            intensity=float(exc_cfg["intensity"]),
            sample_rate=float(exc_cfg["fs"]),
            duration_s=float(exc_cfg["duration_s"]),
            noise_snr_db=scenario.get("noise_snr_db", 40.0),
        )
        chunk_size = int(scenario["chunk_size"])
        sensors_per_story = int(scenario.get("sensors_per_story", 1))
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"bad scenario description: {err}") from err

    result = shearsim.simulate(model, dmg, excitation, chunk_size, sensors_per_story)
    os.makedirs(out_dir, exist_ok=True)
    data_path = os.path.join(out_dir, "data.csv")
    meta_path = os.path.join(out_dir, "metadata.json")
    result.to_csv(data_path)
    result.metadata_to_json(meta_path)
    return {"data": data_path, "metadata": meta_path}


def report(run_dir: str, out_path: str | None = None) -> str:
    """Human-readable table plus plot-ready CCDF series for a finished run."""
    summary_path = os.path.join(run_dir, "summary.json")
    local_path = os.path.join(run_dir, "localization.json")
    trace_path = os.path.join(run_dir, "trace.csv")
    try:
        with open(summary_path) as fh:
            summary = json.load(fh)
        with open(local_path) as fh:
            localization = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"{run_dir}: {err}") from err

    series: dict[str, list[list[float]]] = {}
    try:
        with open(trace_path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                series.setdefault(row["sensor_id"], []).append(
                    [int(row["step"]), float(row["ccdf"])]
                )
    except OSError as err:
        raise ConfigError(f"{trace_path}: {err}") from err

    lambda_true = None
    for s in summary["sensors"]:
        if "lambda_true" in s:
            lambda_true = s["lambda_true"]
            break
    plot = {
        "alpha": summary["alpha"],
        "ccdf_threshold": summary["alpha"],  # declare when the CCDF drops below alpha
        "posterior_threshold": 1.0 - summary["alpha"],
        "lambda_true": lambda_true,
        "series": series,
    }
    out_path = out_path or os.path.join(run_dir, "ccdf_plot.json")
    with open(out_path, "w") as fh:
        json.dump(plot, fh, indent=2, sort_keys=True)
        fh.write("\n")

    by_id = {e["id"]: e for e in localization["sensors"]}
    lines = [
        f"mode={summary['mode']} alpha={summary['alpha']} rho={summary['rho']} "
        f"order={summary['order']} detected={summary['detected']}",
        f"{'sensor':>6} {'position':>12} {'tau':>6} {'delay':>6} {'DI1':>12} "
        f"{'rank1':>5} {'rank2':>5}",
    ]
    for s in summary["sensors"]:
        sid = s["sensor_id"]
        if "error" in s:
            lines.append(f"{sid:>6} {s['position']:>12} error: {s['error']}")
            continue
        loc = by_id.get(sid)
        tau = s["tau"] if s["tau"] is not None else "-"
        delay = s.get("delay")
        delay = delay if delay is not None else ("FA" if s.get("false_alarm") else "-")
        di1 = format(loc["di1"], ".4f") if loc and loc["di1"] is not None else "-"
        r1 = loc["rank_di1"] if loc else "-"
        r2 = loc["rank_di2"] if loc else "-"
        lines.append(
            f"{sid:>6} {s['position']:>12} {tau!s:>6} {delay!s:>6} {di1:>12} {r1!s:>5} {r2!s:>5}"
        )
    return "\n".join(lines)
