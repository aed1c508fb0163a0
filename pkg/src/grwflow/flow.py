"""Explicit time stepping of the graphical prescribed mean curvature flow.

The default ``speed="graph"`` integrates d_s u = -(H - Hpre) v. The option
``speed="normal"`` integrates d_s u = -(H - Hpre) / v, the graph form of a
hypersurface moving with normal speed H - Hpre; both share stationary states.
"""
from __future__ import annotations

import os
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import mesh as bm
from .errors import (AssumptionViolatedError, CorruptCheckpointError, InvalidParametersError,
                     MissingDataError, NumericalBlowupError)
from .graph import DEFAULT_EPS_SL, GeometrySnapshot, GraphState, build_snapshot, max_symbol_eigenvalue
from .warp import WarpingFunction, check_timelike_convergence, eval_warp

SERIES_COLUMNS = ("s", "u_sup", "u_inf", "v_sup", "sup_H_err", "min_H_err", "dt", "Lambda_max")


@dataclass
class PrescribedCurvature:
    values: np.ndarray
    kind: str = "constant"

    @classmethod
    def constant(cls, mesh, value: float):
        return cls(np.full(mesh.shape, float(value)), "constant")

    @classmethod
    def slice_matching(cls, mesh, warp: WarpingFunction, c: float):
        """Mean curvature of the slice {t = c}: -m f'(c) / f(c)."""
        f, fp, _ = eval_warp(warp, c)
        return cls(np.full(mesh.shape, float(-mesh.m * fp / f)), "slice-matching")

    @classmethod
    def from_grid_file(cls, mesh, path):
        from .fieldio import read_field
        if not os.path.exists(path):
            raise MissingDataError(f"prescribed curvature file not found: {path}")
        values, _ = read_field(path)
        if values.shape != mesh.shape:
            raise InvalidParametersError(f"grid file shape {values.shape} does not match mesh {mesh.shape}")
        return cls(values, "grid-file")

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise InvalidParametersError("prescribed curvature must be finite")


@dataclass
class FlowConfig:
    integrator: str = "euler"
    cfl: float = 0.2
    s_end: float = 1.0
    eps_sl: float = DEFAULT_EPS_SL
    checkpoint_every: int = 0
    upper_barrier_delta: float | None = 0.0
    timelike_mode: str | None = None
    hmin_delta: float | None = None
    speed: str = "graph"
    max_steps: int | None = None

    def __post_init__(self):
        if self.integrator not in ("euler", "rk4"):
            raise InvalidParametersError(f"unknown integrator {self.integrator!r}")
        if not 0 < self.cfl <= 1:
            raise InvalidParametersError("cfl must lie in (0, 1]")
        if not self.s_end > 0:
            raise InvalidParametersError("s_end must be positive")
        if self.speed not in ("graph", "normal"):
            raise InvalidParametersError(f"unknown speed {self.speed!r}")
        if self.timelike_mode not in (None, "strict", "nonneg"):
            raise InvalidParametersError(f"unknown timelike mode {self.timelike_mode!r}")
        if self.checkpoint_every < 0:
            raise InvalidParametersError("checkpoint_every must be >= 0")


@dataclass
class FlowRecord:
    rows: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    max_du: list = field(default_factory=list)
    events: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    wall_time: float = 0.0

    def column(self, name: str) -> np.ndarray:
        k = SERIES_COLUMNS.index(name)
        return np.array([r[k] for r in self.rows])

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float).reshape(-1, len(SERIES_COLUMNS))


# ---------------------------------------------------------------- right-hand sides

def rhs_compact(snap: GeometrySnapshot, presc) -> np.ndarray:
    return -(snap.H - _values(presc)) * snap.v


def rhs_normal(snap: GeometrySnapshot, presc) -> np.ndarray:
    return -(snap.H - _values(presc)) / snap.v


def divergence_laplacian(mesh, snap: GeometrySnapshot, field) -> np.ndarray:
    """Positive Laplacian of g in conservative form, -(1/sqrt g) d_i (sqrt g g^ij d_j phi)."""
    sq = np.sqrt(np.linalg.det(np.moveaxis(snap.g, (0, 1), (-2, -1))))
    flux = sq * np.einsum("ij...,j...->i...", snap.g_inv, bm.partials(mesh, field))
    div = sum(bm.diff1(mesh, flux[i], i) for i in range(mesh.m))
    return -div / sq


def rhs_graphical(mesh, warp: WarpingFunction, u, presc, eps_sl: float = DEFAULT_EPS_SL) -> np.ndarray:
    """-Delta u + (f'/f)(m + |du|^2/W) + Hpre f / sqrt(W), Delta in divergence form."""
    snap = build_snapshot(mesh, warp, u, eps_sl)
    lap = divergence_laplacian(mesh, snap, snap.u)
    return (-lap + snap.fp / snap.f * (mesh.m + snap.grad_norm2_tilde / snap.W)
            + _values(presc) * snap.f / np.sqrt(snap.W))


def stability_dt(snap: GeometrySnapshot, mesh, cfl: float):
    """Return (dt, Lambda_max) with dt = cfl h^2 / (2 m Lambda_max)."""
    lam = float(np.max(max_symbol_eigenvalue(snap)))
    return cfl * mesh.h ** 2 / (2 * mesh.m * lam), lam


def _values(presc):
    return presc.values if isinstance(presc, PrescribedCurvature) else np.asarray(presc, dtype=float)


# ---------------------------------------------------------------- stepping

class FlowEngine:
    """Owns the evolving state of one run."""

    def __init__(self, mesh, warp: WarpingFunction, presc: PrescribedCurvature, config: FlowConfig):
        self.mesh, self.warp, self.presc, self.config = mesh, warp, presc, config
        self._rhs = rhs_compact if config.speed == "graph" else rhs_normal
        self._frozen = None if mesh.periodic else ~mesh.interior

    def snapshot(self, u) -> GeometrySnapshot:
        return build_snapshot(self.mesh, self.warp, u, self.config.eps_sl)

    def rhs(self, snap: GeometrySnapshot) -> np.ndarray:
        r = self._rhs(snap, self.presc)
        if self._frozen is not None:
            r = np.where(self._frozen, 0.0, r)
        return r

    def step(self, state: GraphState, dt: float | None = None, snap: GeometrySnapshot | None = None):
        """Advance one step; returns (new_state, dt, Lambda_max, snapshot of new state)."""
        if snap is None:
            snap = self.snapshot(state.u)
        dt_stable, lam = stability_dt(snap, self.mesh, self.config.cfl)
        if dt is None:
            dt = dt_stable
        u = state.u
        k1 = self.rhs(snap)
        if self.config.integrator == "euler":
            u_new = u + dt * k1
        else:
            k2 = self.rhs(self.snapshot(u + 0.5 * dt * k1))
            k3 = self.rhs(self.snapshot(u + 0.5 * dt * k2))
            k4 = self.rhs(self.snapshot(u + dt * k3))
            u_new = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(u_new)):
            raise NumericalBlowupError(f"non-finite height field after step at s={state.s!r}")
        new_snap = self.snapshot(u_new)
        return GraphState(u_new, state.s + dt), dt, lam, new_snap

    def monitors(self, state: GraphState, snap: GeometrySnapshot, dt: float, lam: float) -> tuple:
        err = (snap.H - self.presc.values)[self.mesh.interior]
        return (float(state.s), float(state.u.max()), float(state.u.min()), float(snap.v.max()),
                float(np.abs(err).max()), float(err.min()), float(dt), float(lam))

    def check_assumptions(self, state: GraphState, snap: GeometrySnapshot, record: FlowRecord):
        cfg = self.config
        err = (snap.H - self.presc.values)[self.mesh.interior]
        if cfg.upper_barrier_delta is not None:
            lo = float(err.min())
            if lo < cfg.upper_barrier_delta - 1e-12:
                raise AssumptionViolatedError(
                    f"upper barrier: min(H - Hpre) = {lo:.6g} < delta = {cfg.upper_barrier_delta:g}")
            record.events.append(f"upper barrier ok: min(H - Hpre) = {lo:.6g}")
        if cfg.hmin_delta is not None:
            lo = float(self.presc.values.min())
            if lo < cfg.hmin_delta:
                raise AssumptionViolatedError(f"prescribed curvature min {lo:.6g} < {cfg.hmin_delta:g}")
        if cfg.timelike_mode is not None:
            rep = check_timelike_convergence(self.warp, self.mesh,
                                             (float(state.u.min()) - 1.0, float(state.u.max()) + 1.0),
                                             256, cfg.timelike_mode)
            if not rep.passed:
                raise AssumptionViolatedError(
                    f"timelike convergence ({cfg.timelike_mode}) fails: min Ric(X,X) = {rep.min_value:.6g}")
            record.events.append(f"timelike convergence {rep.verdict}: min {rep.min_value:.6g}")

    def run(self, state: GraphState, step_index: int = 0, record: FlowRecord | None = None,
            checkpoint_dir=None, observer=None, check_assumptions: bool = True,
            emit_initial: bool = True):
        """Integrate from ``state`` until s_end (or max_steps); returns (record, final state)."""
        cfg = self.config
        t0 = time.perf_counter()
        record = record if record is not None else FlowRecord()
        snap = self.snapshot(state.u)
        if check_assumptions and step_index == 0:
            self.check_assumptions(state, snap, record)
        if emit_initial and not record.rows:
            _, lam = stability_dt(snap, self.mesh, cfg.cfl)
            self._append(record, step_index, self.monitors(state, snap, 0.0, lam), 0.0, state, snap, observer)
        if cfg.checkpoint_every and checkpoint_dir is not None and step_index % cfg.checkpoint_every == 0:
            self._checkpoint(record, checkpoint_dir, state, step_index)
        record.events.append(f"start at s={state.s!r} step={step_index}")
        while state.s < cfg.s_end and (cfg.max_steps is None or step_index < cfg.max_steps):
            dt, _ = stability_dt(snap, self.mesh, cfg.cfl)
            if state.s + dt >= cfg.s_end:
                dt = cfg.s_end - state.s
            new, dt, lam, snap = self.step(state, dt, snap)
            if new.s >= cfg.s_end:
                new.s = cfg.s_end
            step_index += 1
            du = float(np.max(np.abs(new.u - state.u)))
            state = new
            self._append(record, step_index, self.monitors(state, snap, dt, lam), du, state, snap, observer)
            if cfg.checkpoint_every and checkpoint_dir is not None and step_index % cfg.checkpoint_every == 0:
                self._checkpoint(record, checkpoint_dir, state, step_index)
        record.events.append(f"stop at s={state.s!r} step={step_index}")
        record.wall_time += time.perf_counter() - t0
        return record, state

    @staticmethod
    def _append(record, step_index, row, du, state, snap, observer):
        record.rows.append(row)
        record.steps.append(step_index)
        record.max_du.append(du)
        if observer is not None:
            observer(step_index, state, snap, row)

    def _checkpoint(self, record, directory, state, step_index):
        path = os.path.join(directory, f"ckpt_{step_index:08d}.grwf")
        write_checkpoint(path, self.mesh, state, step_index)
        record.checkpoints.append(path)
        record.events.append(f"checkpoint {path}")


def step(state: GraphState, mesh, warp, presc, config: FlowConfig, dt: float | None = None) -> GraphState:
    return FlowEngine(mesh, warp, presc, config).step(state, dt)[0]


def run_flow(u0, warp, presc, mesh, config: FlowConfig, checkpoint_dir=None, observer=None):
    engine = FlowEngine(mesh, warp, presc, config)
    return engine.run(GraphState(np.array(u0, dtype=float), 0.0), checkpoint_dir=checkpoint_dir,
                      observer=observer)


def restart(path, warp, presc, config: FlowConfig, record: FlowRecord | None = None,
            checkpoint_dir=None, observer=None):
    """Resume from a checkpoint; returns (record, final state, mesh)."""
    mesh, state, step_index = read_checkpoint(path)
    engine = FlowEngine(mesh, warp, presc, config)
    rec, final = engine.run(state, step_index, record if record is not None else FlowRecord(),
                            checkpoint_dir, observer, check_assumptions=False, emit_initial=False)
    return rec, final, mesh


# ---------------------------------------------------------------- checkpoints

MAGIC = b"GRWF"
VERSION = 1
_TOPO = {"periodic": 0, "dirichlet-rectangle": 1}
_METRIC = {"flat": 0, "conformal": 1}


def _checksum(data: bytes) -> int:
    return int(np.frombuffer(data, dtype=np.uint8).sum(dtype=np.uint64))


def write_checkpoint(path, mesh, state: GraphState, step_index: int):
    """Binary layout (little endian): magic, u32 version, mesh descriptor
    (u32 m, topology, n, metric; f64 lengths; f64 phi if conformal),
    f64 s, u64 step count, f64 u, u64 byte-sum checksum."""
    parts = [MAGIC, struct.pack("<I", VERSION),
             struct.pack("<IIII", mesh.m, _TOPO[mesh.topology], mesh.n, _METRIC[mesh.metric_kind]),
             struct.pack(f"<{mesh.m}d", *mesh.lengths)]
    if mesh.metric_kind == "conformal":
        parts.append(np.ascontiguousarray(mesh.phi, dtype="<f8").tobytes())
    parts += [struct.pack("<dQ", state.s, step_index),
              np.ascontiguousarray(state.u, dtype="<f8").tobytes()]
    body = b"".join(parts)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(body + struct.pack("<Q", _checksum(body)))
    os.replace(tmp, path)


def read_checkpoint(path):
    """Return (mesh, state, step count); raises CorruptCheckpointError on any inconsistency."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CorruptCheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < 32 or data[:4] != MAGIC:
        raise CorruptCheckpointError("bad magic bytes")
    body, tail = data[:-8], data[-8:]
    if struct.unpack("<Q", tail)[0] != _checksum(body):
        raise CorruptCheckpointError("checksum mismatch")
    try:
        (version,) = struct.unpack_from("<I", body, 4)
        if version != VERSION:
            raise CorruptCheckpointError(f"unsupported checkpoint version {version}")
        m, topo, n, metric = struct.unpack_from("<IIII", body, 8)
        pos = 24
        lengths = struct.unpack_from(f"<{m}d", body, pos)
        pos += 8 * m
        topo_name = {v: k for k, v in _TOPO.items()}[topo]
        metric_name = {v: k for k, v in _METRIC.items()}[metric]
        count = n ** m
        phi = None
        if metric_name == "conformal":
            phi = np.frombuffer(body, "<f8", count, pos).reshape((n,) * m).copy()
            pos += 8 * count
        s, step_index = struct.unpack_from("<dQ", body, pos)
        pos += 16
        if len(body) - pos != 8 * count:
            raise CorruptCheckpointError("payload length does not match mesh descriptor")
        u = np.frombuffer(body, "<f8", count, pos).reshape((n,) * m).astype(float)
        mesh = bm.BaseMesh(m, topo_name, n, lengths, metric_name, phi)
    except CorruptCheckpointError:
        raise
    except Exception as exc:  # malformed descriptor
        raise CorruptCheckpointError(f"malformed checkpoint: {exc}") from exc
    return mesh, GraphState(u, s), int(step_index)
