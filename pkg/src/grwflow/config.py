"""``key = value`` run configuration: parsing, validation and object builders."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

from .analytic import INIT_KINDS, evaluate, init_expression
from .errors import ConfigError, InvalidParametersError
from .flow import FlowConfig, PrescribedCurvature
from .mesh import METRICS, TOPOLOGIES, make_mesh
from .warp import WARP_KINDS, WarpingFunction

IDENTITIES = (
    "laplacian_u", "h_cross_check", "h_gradu", "gradient_covector", "volume_form", "metric_norms",
    "rhs_equivalence", "ricci_normal", "property_suite",
    "v_time_derivative", "v_evolution", "v_evolution_corrected", "metric_evolution",
    "inverse_metric_evolution", "mean_curvature_evolution", "mean_curvature_evolution_squared",
)


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return parse


def _optional_float(text):
    return None if text.lower() in ("off", "none", "") else float(text)


def _optional_int(text):
    return None if text.lower() in ("off", "none", "") else int(text)


def _mode(text):
    return None if text.lower() in ("off", "none", "") else _choice(("strict", "nonneg"))(text)


def _float_list(text):
    return [float(x) for x in text.replace(",", " ").split()]


def _name_list(text):
    names = [x for x in text.replace(",", " ").split()]
    bad = [x for x in names if x not in IDENTITIES and x != "all"]
    if bad:
        raise ValueError(f"unknown identities {bad}")
    return list(IDENTITIES) if "all" in names else names


def _int(text):
    val = float(text)
    if val != int(val):
        raise ValueError("must be an integer")
    return int(val)


SCHEMA = {
    "mesh.m": (_int, 1),
    "mesh.topology": (_choice(TOPOLOGIES), "periodic"),
    "mesh.n": (_int, 64),
    "mesh.L": (float, 2 * math.pi),
    "mesh.metric": (_choice(METRICS), "flat"),
    "mesh.phi_amplitude": (float, 0.0),
    "warp.kind": (str, "constant"),
    "warp.a": (float, 1.0),
    "warp.b": (float, 0.0),
    "warp.omega": (float, 1.0),
    "prescribed.kind": (_choice(("constant", "grid-file", "slice-matching")), "constant"),
    "prescribed.value": (float, 0.0),
    "prescribed.file": (str, None),
    "init.kind": (_choice(INIT_KINDS), "constant"),
    "init.amplitude": (float, 0.0),
    "init.center": (_float_list, None),
    "init.width": (float, None),
    "init.level": (float, 0.0),
    "flow.integrator": (_choice(("euler", "rk4")), "euler"),
    "flow.cfl": (float, 0.2),
    "flow.s_end": (float, 1.0),
    "flow.checkpoint_every": (_int, 0),
    "flow.eps_sl": (float, 1e-6),
    "flow.speed": (_choice(("graph", "normal")), "graph"),
    "flow.max_steps": (_optional_int, None),
    "checks.upper_barrier_delta": (_optional_float, 0.0),
    "checks.timelike_mode": (_mode, None),
    "checks.hmin_delta": (_optional_float, None),
    "checks.identities": (_name_list, list(IDENTITIES)),
    "checks.ricci_sigma": (_int, -1),
    "checks.triple_s": (float, 0.05),
    "checks.triple_ds": (float, 0.02),
    "out.dir": (str, "out"),
    "out.series_every": (_int, 1),
    "out.fields_every": (_int, 0),
}


@dataclass
class RunConfig:
    values: dict
    base_dir: str = "."
    explicit: set = field(default_factory=set)

    def __getitem__(self, key):
        return self.values[key]

    def path(self, key):
        p = self.values[key]
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.normpath(os.path.join(self.base_dir, p))

    def to_text(self) -> str:
        """Normalised document with every key and absolute file paths."""
        lines = []
        for key in SCHEMA:
            val = self.values[key]
            if key in ("prescribed.file", "out.dir"):
                val = self.path(key)
            if val is None:
                if key == "prescribed.file" or key.startswith("init."):
                    continue
                val = "off"
            elif isinstance(val, list):
                val = ", ".join(str(x) for x in val)
            elif isinstance(val, float):
                val = repr(val)
            lines.append(f"{key} = {val}")
        return "\n".join(lines) + "\n"


def parse_config(text: str, base_dir: str = ".") -> RunConfig:
    """Parse and validate; raises ConfigError listing every offending key."""
    problems = []
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in SCHEMA:
            problems.append(f"unknown key '{key}'")
            continue
        if key in raw:
            problems.append(f"duplicate key '{key}'")
        raw[key] = val
    values = {}
    for key, (parse, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = parse(raw[key])
            except ValueError as exc:
                problems.append(f"{key}: invalid value {raw[key]!r} ({exc})")
                values[key] = default
        else:
            values[key] = default
    cfg = RunConfig(values, base_dir, set(raw))
    problems += _validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, os.path.dirname(os.path.abspath(path)))


def _validate(cfg: RunConfig):
    v = cfg.values
    out = []
    if v["mesh.m"] not in (1, 2):
        out.append("mesh.m: must be 1 or 2")
    if v["mesh.n"] < 4:
        out.append("mesh.n: need at least 4 nodes per axis")
    if not v["mesh.L"] > 0:
        out.append("mesh.L: must be positive")
    if v["warp.kind"] not in WARP_KINDS:
        out.append(f"warp.kind: unsupported kind {v['warp.kind']!r} (catalog: {', '.join(WARP_KINDS)})")
    else:
        try:
            build_warp(cfg)
        except InvalidParametersError as exc:
            out.append(f"warp: {exc}")
    if not 0 < v["flow.cfl"] <= 1:
        out.append("flow.cfl: must lie in (0, 1]")
    if not v["flow.s_end"] > 0:
        out.append("flow.s_end: must be positive")
    if v["flow.checkpoint_every"] < 0:
        out.append("flow.checkpoint_every: must be >= 0")
    if not v["flow.eps_sl"] > 0:
        out.append("flow.eps_sl: must be positive")
    if v["flow.max_steps"] is not None and v["flow.max_steps"] < 1:
        out.append("flow.max_steps: must be >= 1")
    if v["out.series_every"] < 1:
        out.append("out.series_every: must be >= 1")
    if v["out.fields_every"] < 0:
        out.append("out.fields_every: must be >= 0")
    if v["checks.ricci_sigma"] not in (-1, 1):
        out.append("checks.ricci_sigma: must be -1 or 1")
    if not v["checks.triple_ds"] > 0 or v["checks.triple_s"] < v["checks.triple_ds"]:
        out.append("checks.triple_s/triple_ds: need triple_s >= triple_ds > 0")
    if v["prescribed.kind"] == "grid-file":
        p = cfg.path("prescribed.file")
        if p is None:
            out.append("prescribed.file: required for grid-file prescribed curvature")
        elif not os.path.exists(p):
            out.append(f"prescribed.file: file not found: {p}")
    if v["init.center"] is not None and len(v["init.center"]) != v["mesh.m"]:
        out.append("init.center: needs one coordinate per axis")
    if v["init.width"] is not None and not v["init.width"] > 0:
        out.append("init.width: must be positive")
    if v["init.kind"] == "cap" and v["mesh.topology"] == "periodic":
        out.append("init.kind: cap needs the dirichlet-rectangle topology")
    return out


# ---------------------------------------------------------------- builders

def build_warp(cfg: RunConfig) -> WarpingFunction:
    v = cfg.values
    return WarpingFunction(v["warp.kind"], v["warp.a"], v["warp.b"], v["warp.omega"])


def build_mesh(cfg: RunConfig, n: int | None = None):
    v = cfg.values
    return make_mesh(v["mesh.m"], v["mesh.topology"], n or v["mesh.n"], v["mesh.L"],
                     v["mesh.metric"], v["mesh.phi_amplitude"])


def build_prescribed(cfg: RunConfig, mesh, warp) -> PrescribedCurvature:
    v = cfg.values
    kind = v["prescribed.kind"]
    if kind == "constant":
        return PrescribedCurvature.constant(mesh, v["prescribed.value"])
    if kind == "slice-matching":
        return PrescribedCurvature.slice_matching(mesh, warp, v["prescribed.value"])
    return PrescribedCurvature.from_grid_file(mesh, cfg.path("prescribed.file"))


def initial_expression(cfg: RunConfig, mesh):
    v = cfg.values
    return init_expression(mesh, v["init.kind"], v["init.amplitude"], v["init.center"],
                           v["init.width"], v["init.level"])


def build_initial(cfg: RunConfig, mesh):
    return evaluate(mesh, initial_expression(cfg, mesh))


def build_flow_config(cfg: RunConfig) -> FlowConfig:
    v = cfg.values
    return FlowConfig(
        integrator=v["flow.integrator"], cfl=v["flow.cfl"], s_end=v["flow.s_end"],
        eps_sl=v["flow.eps_sl"], checkpoint_every=v["flow.checkpoint_every"],
        upper_barrier_delta=v["checks.upper_barrier_delta"], timelike_mode=v["checks.timelike_mode"],
        hmin_delta=v["checks.hmin_delta"], speed=v["flow.speed"], max_steps=v["flow.max_steps"],
    )
