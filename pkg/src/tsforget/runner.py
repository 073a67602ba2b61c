"""Config-driven experiment runner.

One JSON document describes an experiment; ``run`` executes it into an output
directory and writes a manifest last.  Jobs over (grid point, seed) are pure
functions of their payload, scheduled over a bounded process pool; results
are aggregated in sorted key order, so every CSV is byte-identical whatever
the worker count.  A run that diverges is flagged in the manifest rather
than aborting the sweep.

Time accounting: simulation traces are indexed by training step; ODE
trajectories by tau = step / D.  The conversion between the two (for
switch placement, cross-section times, and metric grids) happens here, never
inside the numeric modules.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .integrals import i2, i3, i4, mc_expectation
from .metrics import (
    FORGETTING,
    TRANSFER,
    SwitchAnchoredTrace,
    forgetting_at,
    initial_rate,
    long_time,
    max_forgetting,
    max_transfer,
    transfer_at,
)
from .nets import (
    ERF,
    LARGE_INPUT,
    MEAN_FIELD,
    TrainingSchedule,
    init_student,
    train,
)
from .ode import OdeSchedule, integrate
from .overlaps import overlaps_from_weights
from .plotting import emit_plot
from .seeding import derive_seed
from .taskgen import ODE_LIMIT, SimilaritySpec, make_teachers

MODES = ("ode-run", "sim-run", "sweep-v", "sweep-2d", "integrals-check")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    """Flattened view of the JSON experiment document."""

    mode: str
    regime: str = ODE_LIMIT
    activation: str = ERF
    engine: str = "ode"  # trace engine for sweep-v: "ode" or "sim"
    input_dim: int = 1000
    student_hidden: int = 2
    teacher_hidden: int = 1
    switch_step: int = 10_000
    total_steps: int = 30_000
    lr_w: float = 1.0
    lr_h: float = 1.0
    test_set_size: int = 10_000
    log_every: int = 1000
    student_init_std: float = 1e-3
    switch_head_std: float | None = None
    ode_dt: float = 0.01
    ode_log_every_tau: float | None = None
    feature_overlaps: tuple[float, ...] = (1.0,)
    readout_overlaps: tuple[float, ...] = ()
    cross_section_times: tuple[int, ...] = ()
    initial_rate_n: int = 20
    # spacing (in steps) of the averaging grid for the initial rate; 1 uses
    # the per-step definition, larger values average over logged intervals
    initial_rate_interval: int = 1
    log10_errors: bool = False
    track_feature_mse: bool = False
    save_states: bool = False
    n_covariances: int = 200
    mc_samples: int = 1_000_000
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "out"

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.engine not in ("ode", "sim"):
            raise ConfigError(f"unknown engine {self.engine!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.feature_overlaps:
            raise ConfigError("similarity grid must be non-empty")
        if self.mode == "sweep-2d":
            if self.regime != MEAN_FIELD:
                raise ConfigError("sweep-2d runs in the mean-field regime")
            if not self.readout_overlaps:
                raise ConfigError("sweep-2d needs readout_overlaps")
        phase2 = self.total_steps - self.switch_step
        for t in self.cross_section_times:
            if t > phase2:
                raise ConfigError(
                    f"cross-section time {t} exceeds the phase-2 length {phase2}"
                )
        if self.initial_rate_interval < 1:
            raise ConfigError("initial_rate_interval must be >= 1")
        if self.initial_rate_n * self.initial_rate_interval > phase2:
            raise ConfigError("the initial-rate averaging span exceeds phase 2")

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ExperimentConfig":
        dims = doc.get("dims", {})
        sched = doc.get("schedule", {})
        ode_doc = doc.get("ode", {})
        sim = doc.get("similarity", {})
        met = doc.get("metrics", {})
        integ = doc.get("integrals", {})
        kw: dict = {"mode": doc["mode"]}
        for key in ("regime", "activation", "engine", "output_dir"):
            if key in doc:
                kw[key] = doc[key]
        if "seeds" in doc:
            kw["seeds"] = tuple(int(s) for s in doc["seeds"])
        if "input" in dims:
            kw["input_dim"] = int(dims["input"])
        if "student_hidden" in dims:
            kw["student_hidden"] = int(dims["student_hidden"])
        if "teacher_hidden" in dims:
            kw["teacher_hidden"] = int(dims["teacher_hidden"])
        for key in ("switch_step", "total_steps", "test_set_size", "log_every"):
            if key in sched:
                kw[key] = int(sched[key])
        for key in ("lr_w", "lr_h", "student_init_std"):
            if key in sched:
                kw[key] = float(sched[key])
        if sched.get("switch_head_std") is not None:
            kw["switch_head_std"] = float(sched["switch_head_std"])
        if "dt" in ode_doc:
            kw["ode_dt"] = float(ode_doc["dt"])
        if "log_every_tau" in ode_doc:
            kw["ode_log_every_tau"] = float(ode_doc["log_every_tau"])
        if "feature_overlaps" in sim:
            kw["feature_overlaps"] = tuple(float(v) for v in sim["feature_overlaps"])
        if "readout_overlaps" in sim:
            kw["readout_overlaps"] = tuple(float(v) for v in sim["readout_overlaps"])
        if "cross_section_times" in met:
            kw["cross_section_times"] = tuple(int(t) for t in met["cross_section_times"])
        for key in ("initial_rate_n", "initial_rate_interval"):
            if key in met:
                kw[key] = int(met[key])
        for key in ("log10_errors", "track_feature_mse"):
            if key in met:
                kw[key] = bool(met[key])
        if "save_states" in doc:
            kw["save_states"] = bool(doc["save_states"])
        if "n_covariances" in integ:
            kw["n_covariances"] = int(integ["n_covariances"])
        if "mc_samples" in integ:
            kw["mc_samples"] = int(integ["mc_samples"])
        return cls(**kw)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))

    def canonical_json(self) -> str:
        doc = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_seed_offset(self, offset: int) -> "ExperimentConfig":
        if offset == 0:
            return self
        doc = dict(self.__dict__)
        doc["seeds"] = tuple(s + offset for s in self.seeds)
        return ExperimentConfig(**doc)


@dataclass
class RunManifest:
    """Record of one runner invocation; written after all artifacts."""

    mode: str
    config_sha256: str
    code_version: str
    resolved_seeds: list[int]
    wall_clock_s: float
    runs: list[dict]
    artifacts: list[str]

    @property
    def ok(self) -> bool:
        return all(r["status"] == "ok" for r in self.runs)

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "config_sha256": self.config_sha256,
            "code_version": self.code_version,
            "resolved_seeds": self.resolved_seeds,
            "wall_clock_s": self.wall_clock_s,
            "runs": self.runs,
            "artifacts": self.artifacts,
        }


# ---------------------------------------------------------------------------
# Job payload construction and execution (module level: must pickle)
# ---------------------------------------------------------------------------


def _teacher_spec(cfg: ExperimentConfig, v: float, vt: float | None, seed: int) -> SimilaritySpec:
    # The teacher rotation seed depends only on the run seed, so grid points
    # share teacher 1 and the whole phase 1 is common across the sweep.
    return SimilaritySpec(
        feature_overlap=v,
        dims=(cfg.input_dim, cfg.teacher_hidden, cfg.teacher_hidden),
        seed=derive_seed(seed, "teachers"),
        regime=ODE_LIMIT if cfg.regime == ODE_LIMIT else MEAN_FIELD,
        readout_overlap=vt,
    )


def _build_schedule(cfg: ExperimentConfig, seed: int) -> TrainingSchedule:
    extra = tuple(cfg.switch_step + t for t in cfg.cross_section_times)
    if cfg.initial_rate_interval > 1:
        extra = extra + tuple(
            cfg.switch_step + i * cfg.initial_rate_interval
            for i in range(cfg.initial_rate_n + 1)
        )
    return TrainingSchedule(
        switch_step=cfg.switch_step,
        total_steps=cfg.total_steps,
        lr_w=cfg.lr_w,
        lr_h=cfg.lr_h,
        test_set_size=cfg.test_set_size,
        log_every=cfg.log_every,
        seed=derive_seed(seed, "train"),
        student_init_std=cfg.student_init_std,
        switch_head_std=cfg.switch_head_std,
        n_initial_rate=cfg.initial_rate_n,
        extra_log_steps=extra,
        track_feature_mse=cfg.track_feature_mse,
    )


def _sim_job(payload: dict) -> dict:
    cfg = ExperimentConfig(**payload["cfg"])
    v, vt, seed = payload["v"], payload["vt"], payload["seed"]
    try:
        spec = _teacher_spec(cfg, v, vt, seed)
        pair = make_teachers(spec, cfg.activation)
        scaling = LARGE_INPUT if cfg.regime == ODE_LIMIT else MEAN_FIELD
        student = init_student(
            cfg.input_dim, cfg.student_hidden, cfg.student_init_std,
            derive_seed(seed, "student"), cfg.activation, scaling,
        )
        trace = train(student, pair.t_dag, pair.t_ddag, _build_schedule(cfg, seed))
        return {
            "key": payload["key"],
            "status": "ok",
            "teachers": spec.to_json_dict(),
            "steps": trace.steps,
            "eps_dag": trace.eps_dag,
            "eps_ddag": trace.eps_ddag,
            "feature_mse": trace.feature_mse,
        }
    except (FloatingPointError, ValueError, ArithmeticError) as exc:
        return {"key": payload["key"], "status": f"error: {exc}"}


def _ode_job(payload: dict) -> dict:
    cfg = ExperimentConfig(**payload["cfg"])
    v, seed = payload["v"], payload["seed"]
    try:
        spec = _teacher_spec(cfg, v, None, seed)
        pair = make_teachers(spec, cfg.activation)
        student = init_student(
            cfg.input_dim, cfg.student_hidden, cfg.student_init_std,
            derive_seed(seed, "student"), cfg.activation, LARGE_INPUT,
        )
        s0 = overlaps_from_weights(student, pair.t_dag, pair.t_ddag)
        d = cfg.input_dim
        switch_tau = cfg.switch_step / d
        extra = tuple(switch_tau + t / d for t in cfg.cross_section_times)
        # the overlap state stays continuous at the switch: the simulator's
        # init-scale head re-draw perturbs the macroscopic state at O(sigma0),
        # below the resolution the deterministic sweeps are read at
        sched = OdeSchedule(
            switch_time=switch_tau,
            end_time=cfg.total_steps / d,
            dt=cfg.ode_dt,
            lr_w=cfg.lr_w,
            lr_h=cfg.lr_h,
            log_every=cfg.ode_log_every_tau,
            extra_log_times=extra,
        )
        traj = integrate(s0, sched, cfg.activation)
        out = {
            "key": payload["key"],
            "status": "ok",
            "teachers": spec.to_json_dict(),
            "times": traj.times,
            "eps_dag": traj.eps_dag,
            "eps_ddag": traj.eps_ddag,
        }
        if payload.get("save_states"):
            out["states"] = [st.to_json_dict() for st in traj.states]
        return out
    except (FloatingPointError, ValueError, ArithmeticError, RuntimeError) as exc:
        return {"key": payload["key"], "status": f"error: {exc}"}


def _integrals_job(payload: dict) -> dict:
    kind, index, seed, n_samples = (
        payload["kind"], payload["index"], payload["seed"], payload["n_samples"],
    )
    dim = {"I2": 2, "I3": 3, "I4": 4}[kind]
    rng = np.random.default_rng(derive_seed(seed, "integrals-check", kind, index))
    a = rng.standard_normal((dim, dim + 2))
    gram = a @ a.T
    scale = np.sqrt(np.diag(gram))
    corr = gram / np.outer(scale, scale)
    diag = rng.uniform(0.5, 2.0, dim)
    cov = corr * np.sqrt(np.outer(diag, diag))
    analytic = {"I2": i2, "I3": i3, "I4": i4}[kind](cov)
    est, se = mc_expectation(cov, kind, n_samples, derive_seed(seed, "mc", kind, index))
    c_hash = hashlib.sha256(np.ascontiguousarray(cov).tobytes()).hexdigest()[:12]
    return {
        "key": payload["key"],
        "status": "ok" if abs(analytic - est) <= 4.0 * se else "error: beyond 4 standard errors",
        "row": (kind, c_hash, analytic, est, se, int(abs(analytic - est) <= 4.0 * se)),
    }


def _execute(jobs: list[dict], fn, workers: int) -> list[dict]:
    if workers <= 1:
        results = [fn(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, jobs, chunksize=1))
    return sorted(results, key=lambda r: r["key"])


# ---------------------------------------------------------------------------
# Aggregation helpers
# ---------------------------------------------------------------------------


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _fmt_grid(v: float) -> str:
    return f"{v:g}"


def _anchored(cfg: ExperimentConfig, res: dict) -> SwitchAnchoredTrace:
    if "times" in res:
        steps = np.rint(np.asarray(res["times"]) * cfg.input_dim).astype(np.int64)
        tr = SwitchAnchoredTrace(steps, res["eps_dag"], res["eps_ddag"], cfg.switch_step)
    else:
        tr = SwitchAnchoredTrace(res["steps"], res["eps_dag"], res["eps_ddag"], cfg.switch_step)
    return tr.with_log10_errors() if cfg.log10_errors else tr


def _metric_rows(cfg: ExperimentConfig, key: tuple, tr: SwitchAnchoredTrace,
                 fmse_final: float | None) -> list[tuple]:
    v, vt, seed = key
    rows = []

    def add(metric: str, t, value: float) -> None:
        rows.append((v, "" if vt is None else vt, seed, metric, "" if t is None else t, value))

    for t in cfg.cross_section_times:
        add("forgetting", t, forgetting_at(tr, t))
        add("transfer", t, transfer_at(tr, t))
    add("max_forgetting", None, max_forgetting(tr))
    add("max_transfer", None, max_transfer(tr))
    add("long_time_forgetting", None, long_time(tr, FORGETTING, adjusted=False))
    add("long_time_forgetting_adjusted", None, long_time(tr, FORGETTING, adjusted=True))
    add("long_time_transfer", None, long_time(tr, TRANSFER, adjusted=False))
    if cfg.mode == "sweep-2d":
        if cfg.initial_rate_interval > 1:
            # averaged per-step change over n logged intervals; telescopes to
            # the endpoint difference divided by the span
            span = cfg.initial_rate_n * cfg.initial_rate_interval
            add("initial_rate_forgetting", span, forgetting_at(tr, span) / span)
            add("initial_rate_transfer", span, transfer_at(tr, span) / span)
        else:
            add("initial_rate_forgetting", cfg.initial_rate_n,
                initial_rate(tr, FORGETTING, cfg.initial_rate_n))
            add("initial_rate_transfer", cfg.initial_rate_n,
                initial_rate(tr, TRANSFER, cfg.initial_rate_n))
    if fmse_final is not None:
        add("feature_mse_final", None, fmse_final)
    return rows


_HEATMAP_METRICS = (
    "initial_rate_forgetting",
    "initial_rate_transfer",
    "max_forgetting",
    "max_transfer",
    "long_time_forgetting",
    "long_time_forgetting_adjusted",
    "long_time_transfer",
)


# ---------------------------------------------------------------------------
# Mode drivers
# ---------------------------------------------------------------------------


def _drive_integrals(cfg: ExperimentConfig, out: Path, workers: int):
    jobs = []
    for kind in ("I2", "I3", "I4"):
        for index in range(cfg.n_covariances):
            jobs.append({
                "key": (kind, index),
                "kind": kind,
                "index": index,
                "seed": cfg.seeds[0],
                "n_samples": cfg.mc_samples,
            })
    results = _execute(jobs, _integrals_job, workers)
    rows = [r["row"] for r in results]
    _write_csv(out / "integrals_check.csv",
               ["kind", "c_hash", "analytic", "mc", "std_error", "pass"], rows)
    statuses = [{"key": list(r["key"]), "status": r["status"]} for r in results]
    return statuses, ["integrals_check.csv"], rows


def _trace_csv_name(key: tuple) -> str:
    v, vt, seed = key
    mid = f"_Vt{_fmt_grid(vt)}" if vt is not None else ""
    return f"traces/trace_V{_fmt_grid(v)}{mid}_seed{seed}.csv"


def _drive_traces(cfg: ExperimentConfig, out: Path, workers: int):
    """Shared driver for ode-run, sim-run, sweep-v and sweep-2d."""
    use_ode = (cfg.mode == "ode-run") or (cfg.mode == "sweep-v" and cfg.engine == "ode")
    vts: tuple[float | None, ...]
    if cfg.mode == "sweep-2d":
        vts = cfg.readout_overlaps
    elif cfg.regime == MEAN_FIELD:
        vts = (cfg.readout_overlaps[0] if cfg.readout_overlaps else 1.0,)
    else:
        vts = (None,)
    vs = cfg.feature_overlaps if cfg.mode.startswith("sweep") else cfg.feature_overlaps[:1]
    seeds = cfg.seeds if cfg.mode.startswith("sweep") else cfg.seeds[:1]

    cfg_doc = dict(cfg.__dict__)
    jobs = []
    for v in vs:
        for vt in vts:
            for seed in seeds:
                payload = {
                    "key": (v, vt, seed), "cfg": cfg_doc, "v": v, "vt": vt, "seed": seed,
                }
                if use_ode:
                    payload["save_states"] = cfg.save_states
                jobs.append(payload)
    results = _execute(jobs, _ode_job if use_ode else _sim_job, workers)

    artifacts: list[str] = []
    statuses = []
    metric_rows: list[tuple] = []
    ok_traces: dict[tuple, dict] = {}
    for res in results:
        entry = {"key": [str(k) for k in res["key"]], "status": res["status"]}
        if "teachers" in res:
            entry["teachers"] = res["teachers"]
        statuses.append(entry)
        if res["status"] != "ok":
            continue
        ok_traces[res["key"]] = res
        name = _trace_csv_name(res["key"])
        if "times" in res:
            rows = zip(res["times"], res["eps_dag"], res["eps_ddag"])
            _write_csv(out / name, ["tau", "eps_dag", "eps_ddag"], rows)
        else:
            rows = zip(res["steps"], res["eps_dag"], res["eps_ddag"])
            _write_csv(out / name, ["step", "eps_dag", "eps_ddag"], rows)
        artifacts.append(name)
        if res.get("states") is not None:
            sname = name.replace(".csv", "_states.json").replace("traces/", "states/")
            (out / sname).parent.mkdir(parents=True, exist_ok=True)
            with open(out / sname, "w") as fh:
                json.dump(res["states"], fh)
            artifacts.append(sname)

    if cfg.mode.startswith("sweep"):
        for key, res in ok_traces.items():
            tr = _anchored(cfg, res)
            fmse = res.get("feature_mse")
            fmse_final = float(fmse[-1]) if fmse is not None else None
            metric_rows.extend(_metric_rows(cfg, key, tr, fmse_final))
        _write_csv(out / "metrics.csv",
                   ["v", "vtilde", "seed", "metric", "t", "value"], metric_rows)
        artifacts.append("metrics.csv")

    if cfg.mode == "sweep-v":
        artifacts.extend(_emit_sweep_v_outputs(cfg, out, ok_traces))
    elif cfg.mode == "sweep-2d":
        artifacts.extend(_emit_sweep_2d_outputs(cfg, out, metric_rows))
    elif ok_traces:
        key, res = next(iter(ok_traces.items()))
        name = _trace_csv_name(key)
        plot = "plots/" + Path(name).stem + ".svg"
        try:
            emit_plot(out / name, "lines", out / plot, logy=True)
            artifacts.append(plot)
        except ValueError:
            pass
    return statuses, artifacts, metric_rows


def _seed_mean(values: list[float]) -> float:
    return float(np.mean(np.asarray(values, dtype=float)))


def _emit_sweep_v_outputs(cfg: ExperimentConfig, out: Path, ok_traces: dict) -> list[str]:
    artifacts: list[str] = []
    anchored = {key: _anchored(cfg, res) for key, res in ok_traces.items()}
    vs = sorted({key[0] for key in anchored})

    for which in (FORGETTING, TRANSFER):
        combined: dict[float, list[float]] = {v: [] for v in vs}
        for t in cfg.cross_section_times:
            rows = []
            for v in vs:
                vals = [
                    (forgetting_at if which == FORGETTING else transfer_at)(tr, t)
                    for key, tr in anchored.items() if key[0] == v
                ]
                rows.append((v, _seed_mean(vals)))
                combined[v].append(_seed_mean(vals))
            name = f"cross_sections/cs_{which}_t{t}.csv"
            _write_csv(out / name, ["v", "value"], rows)
            artifacts.append(name)
        if cfg.cross_section_times:
            name = f"cross_sections/cs_{which}_all.csv"
            header = ["v"] + [f"t={t}" for t in cfg.cross_section_times]
            _write_csv(out / name, header, [(v, *combined[v]) for v in vs])
            artifacts.append(name)
            plot = f"plots/cs_{which}.svg"
            emit_plot(out / name, "lines", out / plot)
            artifacts.append(plot)

    # combined error-curve plots over V for the first seed
    first_seed = min(key[2] for key in ok_traces)
    per_v = {key[0]: res for key, res in ok_traces.items() if key[2] == first_seed}
    grids = [tuple(np.asarray(res.get("times", res.get("steps"))).tolist())
             for res in per_v.values()]
    if per_v and all(g == grids[0] for g in grids):
        xcol = "tau" if "times" in next(iter(per_v.values())) else "step"
        for series in ("eps_dag", "eps_ddag"):
            name = f"cross_sections/curves_{series}.csv"
            header = [xcol] + [f"V={_fmt_grid(v)}" for v in vs]
            xs = np.asarray(grids[0])
            cols = [np.asarray(per_v[v][series]) for v in vs]
            _write_csv(out / name, header,
                       (tuple(row) for row in np.column_stack([xs] + cols)))
            artifacts.append(name)
            plot = f"plots/curves_{series}.svg"
            emit_plot(out / name, "lines", out / plot, logy=True)
            artifacts.append(plot)
    return artifacts


def _emit_sweep_2d_outputs(cfg: ExperimentConfig, out: Path, metric_rows: list[tuple]) -> list[str]:
    artifacts: list[str] = []
    vs = sorted(set(cfg.feature_overlaps))
    vts = sorted(set(cfg.readout_overlaps), reverse=True)  # rows: vtilde descending
    by_cell: dict[tuple, dict[str, list[float]]] = {}
    for v, vt, _seed, metric, _t, value in metric_rows:
        by_cell.setdefault((v, vt), {}).setdefault(metric, []).append(value)

    for metric in _HEATMAP_METRICS + ("feature_mse_final",):
        if not any(metric in cell for cell in by_cell.values()):
            continue
        header = ["vtilde/v"] + [_fmt_grid(v) for v in vs]
        rows = []
        for vt in vts:
            row: list[float | str] = [vt]
            for v in vs:
                vals = by_cell.get((v, vt), {}).get(metric)
                row.append(_seed_mean(vals) if vals else float("nan"))
            rows.append(tuple(row))
        name = f"heatmaps/heatmap_{metric}.csv"
        _write_csv(out / name, header, rows)
        artifacts.append(name)
        plot = f"plots/heatmap_{metric}.svg"
        emit_plot(out / name, "heatmap", out / plot)
        artifacts.append(plot)
    return artifacts


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def run(cfg: ExperimentConfig, out_dir: str | Path | None = None, workers: int = 1) -> RunManifest:
    """Execute a config into its output directory; write the manifest last."""
    t0 = time.time()
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    if cfg.mode == "integrals-check":
        statuses, artifacts, _rows = _drive_integrals(cfg, out, workers)
    else:
        statuses, artifacts, _rows = _drive_traces(cfg, out, workers)

    manifest = RunManifest(
        mode=cfg.mode,
        config_sha256=cfg.sha256(),
        code_version=__version__,
        resolved_seeds=list(cfg.seeds),
        wall_clock_s=time.time() - t0,
        runs=statuses,
        artifacts=sorted(artifacts),
    )
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest.to_json_dict(), fh, indent=2)
    return manifest
