"""Time-delay sampling schedules and measurement trajectories."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import InvalidArgument, Unsupported
from .quantum import (
    PauliSumOperator,
    as_operator,
    eigh_hermitian,
    expectation,
    krylov_evolve,
)

DENSE_QUBIT_THRESHOLD = 4


def takens_point_count(d: int) -> int:
    """Number of delayed samples 2d + 1 needed to embed a d-dimensional manifold."""
    if d < 1:
        raise InvalidArgument("manifold dimension must be >= 1")
    return 2 * d + 1


@dataclass(frozen=True)
class TimeGrid:
    kind: str
    dt: float
    gamma: float
    count: int
    times: tuple

    def __len__(self):
        return self.count

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dt": self.dt, "gamma": self.gamma, "count": self.count}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TimeGrid":
        if d.get("kind", "geometric") == "uniform":
            return uniform_times(float(d["dt"]), int(d["count"]))
        return geometric_times(float(d["dt"]), float(d["gamma"]), int(d["count"]))


def geometric_times(dt: float, gamma: float, count: int) -> TimeGrid:
    """t_q = dt * gamma**q, q = 0 .. count-1."""
    if not dt > 0:
        raise InvalidArgument("dt must be positive")
    if not gamma > 0 or gamma == 1:
        raise InvalidArgument("gamma must be positive and different from 1")
    if count < 1:
        raise InvalidArgument("count must be >= 1")
    times = tuple(float(dt * gamma ** q) for q in range(count))
    return TimeGrid("geometric", float(dt), float(gamma), int(count), times)


def uniform_times(dt: float, count: int) -> TimeGrid:
    """t_q = (q + 1) * dt."""
    if not dt > 0 or count < 1:
        raise InvalidArgument("need dt > 0 and count >= 1")
    times = tuple(float((q + 1) * dt) for q in range(count))
    return TimeGrid("uniform", float(dt), 1.0, int(count), times)


class Record(NamedTuple):
    time: float
    observable: str
    state_id: str
    value: float


@dataclass
class Trajectory:
    """Expectation values indexed by (state, observable, time)."""

    records: list
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def sorted(self) -> "Trajectory":
        recs = sorted(self.records, key=lambda r: (r.state_id, r.observable, r.time))
        return Trajectory(recs, dict(self.metadata))

    @property
    def state_ids(self) -> list:
        return sorted({r.state_id for r in self.records})

    @property
    def observables(self) -> list:
        return sorted({r.observable for r in self.records})

    def select(self, state_id=None, observable=None):
        """Times and values for one (state, observable) series, sorted by time."""
        recs = [r for r in self.records
                if (state_id is None or r.state_id == state_id)
                and (observable is None or r.observable == observable)]
        recs.sort(key=lambda r: r.time)
        return (np.array([r.time for r in recs]), np.array([r.value for r in recs]))

    def subset(self, state_id=None, observable=None) -> "Trajectory":
        recs = [r for r in self.records
                if (state_id is None or r.state_id == state_id)
                and (observable is None or r.observable == observable)]
        return Trajectory(recs, dict(self.metadata))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state_id", "observable", "time", "value"])
        for r in self.records:
            w.writerow([r.state_id, r.observable, f"{r.time:.17g}", f"{r.value:.17g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
            if self.metadata:
                meta_path(path).write_text(json.dumps(self.metadata, indent=1, sort_keys=True))
        return text

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["state_id", "observable", "time", "value"]:
                raise InvalidArgument(f"{path}: unexpected trajectory columns {reader.fieldnames}")
            recs = [Record(float(row["time"]), row["observable"], row["state_id"],
                           float(row["value"])) for row in reader]
        meta = {}
        if meta_path(path).exists():
            meta = json.loads(meta_path(path).read_text())
        return cls(recs, meta)


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


@dataclass(frozen=True)
class BornDistribution:
    time: float
    probs: np.ndarray


def _label(op, k: int) -> str:
    if isinstance(op, str):
        return op.upper()
    if len(op.terms) == 1 and op.terms[0][1] == 1.0:
        return op.terms[0][0]
    return f"M{k}"


def _states_dict(states) -> dict:
    if isinstance(states, Mapping):
        return {str(k): np.asarray(v, dtype=complex) for k, v in states.items()}
    if isinstance(states, np.ndarray) and states.ndim == 1:
        states = [states]
    return {f"s{k}": np.asarray(v, dtype=complex) for k, v in enumerate(states)}


def _propagator(H: PauliSumOperator, dense_threshold: int):
    """Return a function t, psi -> exp(-i H t) psi."""
    if H.n_qubits <= dense_threshold:
        lam, V = eigh_hermitian(H)
        Vh = V.conj().T
        return lambda t, psi: V @ (np.exp(-1j * lam * t) * (Vh @ psi))
    return lambda t, psi: krylov_evolve(H, psi, t)


def simulate_trajectory(H: PauliSumOperator, states, observables: Sequence,
                        grid, dense_threshold: int = DENSE_QUBIT_THRESHOLD) -> Trajectory:
    """Exact expectation values <psi(t)|M|psi(t)> on a time grid."""
    times = grid.times if isinstance(grid, TimeGrid) else tuple(float(t) for t in grid)
    states = _states_dict(states)
    ops = [(_label(o, k), as_operator(o)) for k, o in enumerate(observables)]
    for sid, psi in states.items():
        if psi.shape[0] != H.dim:
            raise InvalidArgument(f"state {sid} does not match the Hamiltonian dimension")
    for name, op in ops:
        if op.n_qubits != H.n_qubits:
            raise InvalidArgument(f"observable {name} acts on the wrong number of qubits")
    prop = _propagator(H, dense_threshold)
    recs = []
    for sid, psi in states.items():
        for t in times:
            phi = prop(t, psi)
            for name, op in ops:
                recs.append(Record(float(t), name, sid, expectation(phi, op)))
    traj = Trajectory(recs).sorted()
    if isinstance(grid, TimeGrid):
        traj.metadata["grid"] = grid.to_dict()
    return traj


def simulate_born(H: PauliSumOperator, psi, grid,
                  dense_threshold: int = DENSE_QUBIT_THRESHOLD, tol: float = 1e-10):
    """Computational-basis probabilities |psi(t)|^2 at each grid time."""
    times = grid.times if isinstance(grid, TimeGrid) else tuple(float(t) for t in grid)
    psi = np.asarray(psi, dtype=complex)
    if H.n_qubits <= dense_threshold:
        prop = _propagator(H, dense_threshold)
        return [BornDistribution(float(t), np.abs(prop(t, psi)) ** 2) for t in times]
    # evolve incrementally so each Krylov call only covers one interval
    out, prev_t, phi = [], 0.0, psi
    for t in sorted(times):
        phi = krylov_evolve(H, phi, t - prev_t, tol=tol)
        prev_t = t
        out.append(BornDistribution(float(t), np.abs(phi) ** 2))
    return out


def born_to_csv(dists, path=None) -> str:
    n = len(dists[0].probs)
    lines = [",".join(["time"] + [f"p_{j}" for j in range(n)])]
    for d in dists:
        lines.append(",".join([f"{d.time:.17g}"] + [f"{p:.17g}" for p in d.probs]))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def born_from_csv(path) -> list:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return [BornDistribution(float(row[0]), row[1:].copy()) for row in data]


def _is_pauli_label(name: str) -> bool:
    return bool(name) and all(ch in "IXYZ" for ch in name) and set(name) != {"I"}


def add_shot_noise(traj: Trajectory, shots: int, seed=None) -> Trajectory:
    """Replace each exact +-1-valued expectation by a finite-shot estimate."""
    if shots < 1:
        raise InvalidArgument("shots must be >= 1")
    rng = np.random.default_rng(seed)
    recs = []
    for r in traj.records:
        if not _is_pauli_label(r.observable):
            raise Unsupported(f"shot noise needs single Pauli strings, got {r.observable!r}")
        p_up = min(max((1.0 + r.value) / 2.0, 0.0), 1.0)
        ups = rng.binomial(shots, p_up)
        recs.append(r._replace(value=(2.0 * ups - shots) / shots))
    meta = dict(traj.metadata)
    meta["shots"] = shots
    return Trajectory(recs, meta)
