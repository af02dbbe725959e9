"""Experiment configs, named presets and per-trial runners shared by the CLI and scripts."""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, QPTError
from .lattice import (
    LatticeSpec,
    build_lattice,
    reconstruct_lattice,
    reference_born,
)
from .optim import OptimizerConfig
from .partial import PartialMeasSetup, reconstruct_partial, simulate_partial
from .quantum import PauliSumOperator, random_state
from .relax import PenaltyWeights, reconstruct_relax
from .report import ReconstructionReport
from .sampling import (
    TimeGrid,
    Trajectory,
    born_from_csv,
    born_to_csv,
    meta_path,
    simulate_trajectory,
)
from .single_qubit import geometry_from_state, reconstruct_single_qubit

PIPELINES = ("single", "relax1q", "relax2q", "partial", "lattice-uniform", "lattice-disorder")
RELAX2Q_OBSERVABLES = ("IX", "IY", "IZ", "XI", "YI", "ZI", "XX", "YY", "ZZ")


class ConfigError(InvalidArgument):
    """Malformed or inconsistent experiment configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class ExperimentConfig:
    pipeline: str
    figure: str = ""
    seed: int = 0
    trials: int = 1
    grid: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    hamiltonian: str | None = None  # Pauli-sum or lattice JSON; random ground truth if absent

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"pipeline: unknown value {self.pipeline!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed: must be a nonnegative integer")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials: must be a positive integer")
        try:
            self.optimizer_config()
        except (TypeError, InvalidArgument) as exc:
            raise ConfigError(f"optimizer: {exc}") from exc
        try:
            self.time_grid()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"grid: {exc}") from exc

    def optimizer_config(self, seed: int = 0) -> OptimizerConfig:
        return OptimizerConfig(**{"seed": seed, **self.optimizer})

    def time_grid(self) -> TimeGrid | None:
        return TimeGrid.from_dict(self.grid) if self.grid else None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError(f"{key}: unknown config field")
        if "pipeline" not in d:
            raise ConfigError("pipeline: missing")
        return cls(**d)


def _preset(**kw) -> ExperimentConfig:
    return ExperimentConfig(**kw)


PRESETS = {
    "fig5a-single": _preset(
        pipeline="single", figure="single-qubit exact", trials=100,
        grid={"kind": "geometric", "dt": 0.3, "gamma": 1.3, "count": 7},
        options={"restarts": 5, "tol": 1e-10}),
    "fig5b-relax1q": _preset(
        pipeline="relax1q", figure="single-qubit relaxation", trials=20,
        grid={"kind": "geometric", "dt": 0.1, "gamma": 2.0, "count": 4},
        optimizer={"algorithm": "adam", "learning_rate": 0.01, "epochs": 5000},
        options={"observables": ["Z", "X"], "polish": True}),
    "fig5c-relax2q": _preset(
        pipeline="relax2q", figure="two-qubit relaxation", trials=20,
        grid={"kind": "geometric", "dt": 0.05, "gamma": 2.0, "count": 6},
        optimizer={"algorithm": "adam", "learning_rate": 0.01, "epochs": 5000,
                   "lr_final_ratio": 0.01},
        options={"observables": list(RELAX2Q_OBSERVABLES), "polish": True,
                 "weights": {"w_data": 54.0}, "schedule": ["joint", "progressive"],
                 "restarts": 2, "target_loss": 1e-12}),
    "fig6-partial": _preset(
        pipeline="partial", figure="partial measurement", trials=20,
        grid={"kind": "geometric", "dt": 0.2, "gamma": 1.15, "count": 12},
        optimizer={"algorithm": "adam", "learning_rate": 0.05, "epochs": 3000},
        options={"restarts": 10}),
    "fig7a-lattice": _preset(
        pipeline="lattice-uniform", figure="uniform lattice", trials=10,
        grid={"kind": "uniform", "dt": 0.2, "count": 3},
        optimizer={"algorithm": "rmsprop", "learning_rate": 0.005, "epochs": 500},
        options={"rows": 3, "cols": 4, "periodic": True, "J": 1.0, "h": [0.5, -0.8, 1.1]}),
    "fig7a-lattice-smoke": _preset(
        pipeline="lattice-uniform", figure="uniform lattice, 2x3 smoke", trials=10,
        grid={"kind": "uniform", "dt": 0.2, "count": 3},
        optimizer={"algorithm": "rmsprop", "learning_rate": 0.005, "epochs": 500},
        options={"rows": 2, "cols": 3, "periodic": True, "J": 1.0, "h": [0.5, -0.8, 1.1]}),
    "fig7b-lattice-disorder": _preset(
        pipeline="lattice-disorder", figure="disordered lattice", trials=10,
        grid={"kind": "uniform", "dt": 0.2, "count": 3},
        optimizer={"algorithm": "rmsprop", "learning_rate": 0.005, "epochs": 500},
        options={"rows": 3, "cols": 4, "periodic": True}),
}


def resolve_config(preset: str | None = None, config_path=None, **overrides) -> ExperimentConfig:
    """Preset, then JSON config file, then explicit overrides (None values ignored)."""
    data: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r}")
        data = PRESETS[preset].to_dict()
        data["figure"] = data["figure"] or preset
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config: file {path} not found")
        try:
            user = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from exc
        if not isinstance(user, dict):
            raise ConfigError("config: top level must be an object")
        base = user.pop("preset", None)
        if base is not None and preset is None:
            return resolve_config(base, None, **{**user, **overrides})
        for key in ("grid", "optimizer", "options"):
            if key in user and isinstance(user[key], dict):
                user[key] = {**data.get(key, {}), **user[key]}
        data.update(user)
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("grid", "optimizer", "options"):
            value = {**data.get(key, {}), **value}
        data[key] = value
    if not data:
        raise ConfigError("config: need --preset or --config")
    return ExperimentConfig.from_dict(data)


def trial_seed(master: int, index: int) -> int:
    """Counter-based per-trial seed derived from the master seed."""
    return int(np.random.SeedSequence([master, index]).generate_state(1)[0])


def optimizer_seed(trial: int) -> int:
    """Seed for the reconstruction, independent of the stream that drew the truth."""
    return int(np.random.SeedSequence(trial, spawn_key=(1,)).generate_state(1)[0])


# -- ground truth and data ---------------------------------------------------

def _encode_state(psi) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(psi)]


def _decode_state(data) -> np.ndarray:
    return np.array([complex(re, im) for re, im in data])


def _load_hamiltonian(cfg: ExperimentConfig):
    path = Path(cfg.hamiltonian)
    if not path.exists():
        raise ConfigError(f"hamiltonian: file {path} not found")
    try:
        data = json.loads(path.read_text())
        if cfg.pipeline.startswith("lattice"):
            return LatticeSpec.from_dict(data)
        return PauliSumOperator.from_dict(data)
    except (json.JSONDecodeError, InvalidArgument) as exc:
        raise ConfigError(f"hamiltonian: {exc}") from exc


def _n_qubits(pipeline: str) -> int:
    return 1 if pipeline in ("single", "relax1q") else 2


@dataclass
class TrialData:
    """Measurement data for one trial plus everything needed to reconstruct it."""

    trajectory: Trajectory | None
    born: list | None
    meta: dict

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        if self.trajectory is not None:
            path = directory / "trajectory.csv"
            Trajectory(self.trajectory.records, self.meta).to_csv(path)
        else:
            path = directory / "born.csv"
            born_to_csv(self.born, path)
            meta_path(path).write_text(json.dumps(self.meta, indent=1, sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> "TrialData":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"trajectory: file {path} not found")
        if not meta_path(path).exists():
            raise ConfigError(f"trajectory: metadata file {meta_path(path)} not found")
        meta = json.loads(meta_path(path).read_text())
        if meta.get("pipeline", "").startswith("lattice"):
            return cls(None, born_from_csv(path), meta)
        traj = Trajectory.from_csv(path)
        return cls(traj, None, traj.metadata)


def simulate_trial(cfg: ExperimentConfig, index: int) -> TrialData:
    """Draw (or load) the ground truth for one trial and simulate its data."""
    seed = trial_seed(cfg.seed, index)
    rng = np.random.default_rng(seed)
    opts = cfg.options
    meta = {"pipeline": cfg.pipeline, "figure": cfg.figure, "trial": index, "seed": seed,
            "grid": cfg.grid}
    if cfg.pipeline.startswith("lattice"):
        return _simulate_lattice(cfg, rng, meta)
    n = _n_qubits(cfg.pipeline)
    if cfg.hamiltonian is not None:
        H = _load_hamiltonian(cfg)
        if H.n_qubits != n:
            raise ConfigError(f"hamiltonian: pipeline {cfg.pipeline} needs {n} qubit(s)")
    else:
        H = PauliSumOperator.from_vector(rng.standard_normal(4 ** n - 1), n)
    grid = cfg.time_grid()
    if cfg.pipeline == "partial":
        states = (random_state(2, rng), random_state(2, rng))
        setup = PartialMeasSetup(states, grid, restarts=int(opts.get("restarts", 10)))
        traj = simulate_partial(H, setup)
    else:
        psi = random_state(n, rng)
        states = (psi,)
        if cfg.pipeline == "single":
            main = simulate_trajectory(H, {"s0": psi}, ["Z"], grid)
            aux_times = opts.get("aux_times") or [grid.dt * grid.gamma ** grid.count]
            aux = simulate_trajectory(H, {"s0": psi}, [opts.get("aux_observable", "X")],
                                      aux_times)
            traj = Trajectory(main.records + aux.records).sorted()
        else:
            default = ["Z", "X"] if n == 1 else list(RELAX2Q_OBSERVABLES)
            traj = simulate_trajectory(H, {"s0": psi}, opts.get("observables", default), grid)
    meta["states"] = {f"s{k}": _encode_state(s) for k, s in enumerate(states)}
    meta["ground_truth"] = H.to_dict()
    return TrialData(traj, None, meta)


def _lattice_truth(cfg: ExperimentConfig, rng) -> LatticeSpec:
    opts = cfg.options
    if cfg.hamiltonian is not None:
        return _load_hamiltonian(cfg)
    rows, cols = int(opts.get("rows", 3)), int(opts.get("cols", 4))
    periodic = bool(opts.get("periodic", True))
    if cfg.pipeline == "lattice-uniform":
        return build_lattice(rows, cols, periodic, J=opts.get("J", 1.0),
                             h=opts.get("h", [0.5, -0.8, 1.1]))
    return build_lattice(rows, cols, periodic, seed=int(rng.integers(2 ** 63)))


def _simulate_lattice(cfg, rng, meta) -> TrialData:
    spec = _lattice_truth(cfg, rng)
    psi = random_state(spec.n_sites, rng)
    grid = cfg.time_grid()
    if grid.kind != "uniform":
        raise ConfigError("grid: lattice pipelines use a uniform grid")
    born = reference_born(spec, psi, grid.dt, grid.count)
    meta["states"] = {"s0": _encode_state(psi)}
    meta["ground_truth"] = spec.to_dict()
    return TrialData(None, born, meta)


# -- reconstruction ----------------------------------------------------------

def reconstruct_trial(cfg: ExperimentConfig, data: TrialData) -> ReconstructionReport:
    meta = data.meta
    if meta.get("pipeline") not in (None, cfg.pipeline):
        raise ConfigError(f"trajectory: recorded for pipeline {meta['pipeline']!r}, "
                          f"not {cfg.pipeline!r}")
    seed = optimizer_seed(int(meta.get("seed", cfg.seed)))
    opt = cfg.optimizer_config(seed)
    opts = dict(cfg.options)
    states = [_decode_state(v) for _, v in sorted(meta.get("states", {}).items())]
    if not states:
        raise ConfigError("trajectory: metadata carries no initial state")
    truth = meta.get("ground_truth")
    if cfg.pipeline.startswith("lattice"):
        report = _reconstruct_lattice(cfg, data, states[0], truth, opt)
    else:
        if data.trajectory is None:
            raise ConfigError("trajectory: expectation-value data required")
        h_true = PauliSumOperator.from_dict(truth).to_vector() if truth else None
        traj = data.trajectory
        if cfg.pipeline == "single":
            aux_obs = opts.get("aux_observable", "X")
            main = traj.subset(observable="Z")
            aux = traj.subset(observable=aux_obs)
            if len(main) == 0 or len(aux) == 0:
                raise ConfigError("trajectory: single pipeline needs Z data and aux data")
            report = reconstruct_single_qubit(
                main, aux, geometry_from_state(states[0]), opts.get("omega_max"),
                int(opts.get("restarts", 5)), float(opts.get("tol", 1e-10)), h_true)
        elif cfg.pipeline in ("relax1q", "relax2q"):
            want = 1 if cfg.pipeline == "relax1q" else 2
            if len(states[0]) != 2 ** want:
                raise ConfigError(f"trajectory: {cfg.pipeline} needs {want}-qubit data")
            kw = {k: opts[k] for k in ("schedule", "restarts", "target_loss", "polish",
                                       "init_sigma", "restart_sigma") if k in opts}
            weights = PenaltyWeights(**opts.get("weights", {}))
            report = reconstruct_relax(traj, states[0], weights, opt, seed=seed,
                                       dt=cfg.grid.get("dt"), h_true=h_true, **kw)
        else:
            setup = PartialMeasSetup(tuple(states), cfg.time_grid(),
                                     restarts=int(opts.get("restarts", 10)))
            report = reconstruct_partial(traj, setup, opt, seed=seed, h_true=h_true)
    report.info.update({"figure": cfg.figure, "trial": meta.get("trial"),
                        "seed": meta.get("seed"), "optimizer_seed": seed,
                        "config": cfg.to_dict()})
    return report


def _reconstruct_lattice(cfg, data: TrialData, psi, truth, opt):
    if data.born is None:
        raise ConfigError("trajectory: lattice pipelines need Born-distribution data")
    truth_spec = LatticeSpec.from_dict(truth) if truth else None
    template = truth_spec or _lattice_truth(cfg, np.random.default_rng(0))
    mode = "uniform" if cfg.pipeline == "lattice-uniform" else "disorder"
    gradient = cfg.options.get("gradient", "analytic")
    return reconstruct_lattice(data.born, psi, template, cfg.grid["dt"], opt, mode=mode,
                               truth=truth_spec, gradient=gradient)


def run_trial(cfg: ExperimentConfig, index: int) -> ReconstructionReport:
    return reconstruct_trial(cfg, simulate_trial(cfg, index))


def run_trials(cfg: ExperimentConfig, jobs: int | None = None) -> list:
    """All trials of ``cfg``; ordered by trial index regardless of completion order."""
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or cfg.trials == 1:
        return [run_trial(cfg, i) for i in range(cfg.trials)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_trial, [cfg] * cfg.trials, range(cfg.trials)))


# -- aggregation ---------------------------------------------------------------

def _quantiles(values) -> tuple:
    v = np.asarray(values, dtype=float)
    return tuple(float(x) for x in np.quantile(v, [0.5, 0.25, 0.75]))


def aggregate_histories(reports: list) -> dict:
    """Per-epoch median and 25/75 % quantiles of loss and error histories."""
    if not reports:
        raise InvalidArgument("nothing to aggregate")
    columns = {"loss": [r.loss_history for r in reports]}
    for key in reports[0].histories:
        columns[key] = [r.histories.get(key, []) for r in reports]
    lengths = {len(h) for col in columns.values() for h in col}
    if len(lengths) > 1:
        raise InvalidArgument(f"misaligned epoch counts {sorted(lengths)}")
    n = lengths.pop()
    out = {"epoch": list(range(n))}
    for name, hists in columns.items():
        arr = np.asarray(hists, dtype=float).reshape(len(reports), n)
        if n:
            q = np.quantile(arr, [0.5, 0.25, 0.75], axis=0)
        else:
            q = np.zeros((3, 0))
        out[f"{name}_median"], out[f"{name}_q25"], out[f"{name}_q75"] = (x.tolist() for x in q)
    return out


def aggregate_summary(reports: list) -> dict:
    """Median and 25/75 % quantiles over trials of final loss and relative errors."""
    if not reports:
        raise InvalidArgument("nothing to aggregate")
    keys = sorted(set().union(*[r.relative_errors for r in reports]))
    rows = {"final_loss": _quantiles([r.final_loss for r in reports])}
    for k in keys:
        rows[k] = _quantiles([r.relative_errors.get(k, np.nan) for r in reports])
    return rows


def table_csv(columns: dict) -> str:
    names = list(columns)
    n = len(columns[names[0]]) if names else 0
    lines = [",".join(names)]
    for i in range(n):
        lines.append(",".join(str(columns[c][i]) if c == "epoch" else f"{columns[c][i]:.17g}"
                              for c in names))
    return "\n".join(lines) + "\n"


def summary_csv(rows: dict) -> str:
    lines = ["quantity,median,q25,q75"]
    for name, (m, lo, hi) in rows.items():
        lines.append(f"{name},{m:.17g},{lo:.17g},{hi:.17g}")
    return "\n".join(lines) + "\n"


__all__ = [
    "ConfigError", "ExperimentConfig", "PRESETS", "QPTError", "TrialData", "resolve_config",
    "trial_seed", "simulate_trial", "reconstruct_trial", "run_trial", "run_trials",
    "aggregate_histories", "aggregate_summary", "table_csv", "summary_csv",
]
