"""Command line interface.

Exit codes: 0 success, 2 configuration or input problem, 3 space-like guard
tripped, 4 numerical blow-up, 5 identity contract missed.
"""
from __future__ import annotations

import argparse
import glob
import json
import os
import sys

import numpy as np

from . import config as cf
from . import identities as il
from . import lab
from . import mesh as bm
from .analytic import default_phi_expr
from .errors import (AssumptionViolatedError, ConfigError, CorruptCheckpointError, GRWFlowError,
                     InvalidParametersError, MissingDataError, NotSpacelikeError, NumericalBlowupError)
from .fieldio import SeriesWriter, read_series, truncate_series, write_field
from .flow import FlowEngine, FlowRecord, GraphState, read_checkpoint, stability_dt
from .graph import build_snapshot, metric_equivalence_constants, volume_density
from .report import summarize_series
from .warp import check_timelike_convergence

EXIT_OK, EXIT_CONFIG, EXIT_SPACELIKE, EXIT_BLOWUP, EXIT_IDENTITY = 0, 2, 3, 4, 5


class _Outputs:
    """Observer writing series rows, field dumps and the final summary of a run."""

    def __init__(self, cfg: cf.RunConfig, out_dir: str, append: bool = False):
        self.cfg, self.dir = cfg, out_dir
        self.series = SeriesWriter(os.path.join(out_dir, "series.csv"), append=append)
        self.fields_dir = os.path.join(out_dir, "fields")
        self.every = cfg["out.series_every"]
        self.fields_every = cfg["out.fields_every"]
        self.last = None
        if self.fields_every:
            os.makedirs(self.fields_dir, exist_ok=True)

    def __call__(self, step, state, snap, row):
        if step % self.every == 0:
            self.series.write(row)
            self.last = step
        if self.fields_every and step % self.fields_every == 0:
            self.dump(step, state)
        self._pending = (step, state, row)

    def dump(self, step, state):
        path = os.path.join(self.fields_dir, f"u_{step:08d}.csv")
        mesh_meta = {"m": self.cfg["mesh.m"], "topology": self.cfg["mesh.topology"], "step": step}
        write_field(path, state.u, state.s, **mesh_meta)

    def finish(self):
        step, state, row = self._pending
        if self.last != step:
            self.series.write(row)
        if self.fields_every and step % self.fields_every:
            self.dump(step, state)
        self.series.close()


def _run_engine(cfg, mesh, state, step_index, out_dir, append):
    warp = cf.build_warp(cfg)
    presc = cf.build_prescribed(cfg, mesh, warp)
    engine = FlowEngine(mesh, warp, presc, cf.build_flow_config(cfg))
    outputs = _Outputs(cfg, out_dir, append)
    record = FlowRecord()
    try:
        record, final = engine.run(state, step_index, record, out_dir, outputs,
                                   check_assumptions=not append, emit_initial=not append)
    finally:
        if hasattr(outputs, "_pending"):
            outputs.finish()
    rows = record.as_array()
    summary = {
        "final_s": final.s, "steps": record.steps[-1] if record.steps else step_index,
        "u_sup": float(final.u.max()), "u_inf": float(final.u.min()),
        "v_sup_max": float(rows[:, 3].max()) if rows.size else None,
        "final_sup_H_err": float(rows[-1, 4]) if rows.size else None,
        "wall_time": record.wall_time, "events": record.events,
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    print(json.dumps({k: v for k, v in summary.items() if k != "events"}, indent=2))
    return EXIT_OK


def cmd_run(args):
    cfg = cf.load_config(args.config)
    out_dir = cfg.path("out.dir")
    os.makedirs(out_dir, exist_ok=True)
    for old in glob.glob(os.path.join(out_dir, "ckpt_*.grwf")):
        os.remove(old)
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(cfg.to_text())
    mesh = cf.build_mesh(cfg)
    state = GraphState(cf.build_initial(cfg, mesh), 0.0)
    return _run_engine(cfg, mesh, state, 0, out_dir, append=False)


def cmd_restart(args):
    ckpt = os.path.abspath(args.checkpoint)
    run_dir = os.path.dirname(ckpt)
    cfg_path = args.config or os.path.join(run_dir, "config.txt")
    cfg = cf.load_config(cfg_path)
    mesh, state, step_index = read_checkpoint(ckpt)
    expect = cf.build_mesh(cfg)
    if (mesh.m, mesh.n, mesh.topology, mesh.metric_kind) != (expect.m, expect.n, expect.topology, expect.metric_kind) \
            or not np.allclose(mesh.lengths, expect.lengths, rtol=0, atol=0):
        raise CorruptCheckpointError("checkpoint mesh descriptor does not match the run configuration")
    out_dir = cfg.path("out.dir") if args.config else run_dir
    os.makedirs(out_dir, exist_ok=True)
    series = os.path.join(out_dir, "series.csv")
    if os.path.exists(series):
        truncate_series(series, state.s)
    return _run_engine(cfg, mesh, state, step_index, out_dir, append=True)


def cmd_check_identities(args):
    cfg = cf.load_config(args.config)
    try:
        ladder = [int(x) for x in args.ladder.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--ladder: expected comma separated integers, got {args.ladder!r}")
    if len(ladder) < 3 or any(n < 4 for n in ladder):
        raise ConfigError("--ladder: need at least three grid sizes, each >= 4")
    warp = cf.build_warp(cfg)
    probe = cf.build_mesh(cfg, ladder[0])
    u_expr = cf.initial_expression(cfg, probe)
    phi_expr = None
    if cfg["mesh.metric"] == "conformal":
        phi_expr = default_phi_expr(probe, cfg["mesh.phi_amplitude"])
    names = cfg["checks.identities"]
    mesh_for = (lambda n: cf.build_mesh(cfg, n))
    if cfg["prescribed.kind"] == "grid-file":
        raise ConfigError("prescribed.kind: grid-file data cannot be refined; use constant or slice-matching")
    presc_for = (lambda mesh: cf.build_prescribed(cfg, mesh, warp).values)
    outcomes = lab.spatial_ladder(mesh_for, warp, presc_for, u_expr, ladder, phi_expr, names,
                                  cfg["checks.ricci_sigma"])
    evo = [n for n in names if n in lab.EVOLUTION]
    if evo:
        outcomes += lab.evolution_ladder(mesh_for, warp, presc_for, u_expr, ladder,
                                         cfg["checks.triple_s"], cfg["checks.triple_ds"], evo)
    text = _format_outcomes(outcomes, ladder)
    print(text)
    out_dir = cfg.path("out.dir")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "identities.txt"), "w") as fh:
        fh.write(text + "\n")
    with open(os.path.join(out_dir, "identities.csv"), "w") as fh:
        fh.write("identity,kind," + ",".join(f"sup_n{n}" for n in ladder) + ",order,requirement,status\n")
        for o in outcomes:
            order = "" if o.order is None else repr(o.order)
            fh.write(f"{o.identity},{o.kind}," + ",".join(repr(x) for x in o.sups)
                     + f",{order},{o.requirement},{'PASS' if o.passed else 'FAIL'}\n")
    return EXIT_OK if all(o.passed for o in outcomes) else EXIT_IDENTITY


def _format_outcomes(outcomes, ladder):
    lines = [f"ladder: {', '.join(map(str, ladder))}"]
    for o in outcomes:
        sups = " ".join(f"{x:.3e}" for x in o.sups)
        order = "   -  " if o.order is None else f"{o.order:6.3f}"
        note = f"  [{o.note}]" if o.note else ""
        lines.append(f"{'PASS' if o.passed else 'FAIL'}  {o.identity:38s} {order}  {sups}  ({o.requirement}){note}")
    failed = [o.identity for o in outcomes if not o.passed]
    lines.append("overall: PASS" if not failed else f"overall: FAIL ({', '.join(failed)})")
    return "\n".join(lines)


def cmd_check_geometry(args):
    cfg = cf.load_config(args.config)
    mesh = cf.build_mesh(cfg)
    warp = cf.build_warp(cfg)
    presc = cf.build_prescribed(cfg, mesh, warp)
    u = cf.build_initial(cfg, mesh)
    snap = build_snapshot(mesh, warp, u, cfg["flow.eps_sl"])
    curv = il.curvature_along(snap, warp)
    checks = []

    def add(name, ok, detail):
        checks.append((name, bool(ok), detail))

    add("v >= 1", np.all(snap.v >= 1 - 1e-12), f"min v = {snap.v.min():.6g}")
    add("|grad u|^2 = v^2 - 1", np.max(np.abs(snap.grad_u_norm2 - (snap.v ** 2 - 1))) <= 1e-10, "")
    eye = np.einsum("ik...,kj...->ij...", snap.g, snap.g_inv)
    ident = np.eye(mesh.m).reshape((mesh.m, mesh.m) + (1,) * mesh.m)
    add("g g^-1 = I", np.max(np.abs(eye - ident)) <= 1e-10, "")
    vc = volume_density(snap)
    add("volume density", vc.max_abs_diff <= 1e-10, f"max diff {vc.max_abs_diff:.3e}")
    mn = metric_equivalence_constants(snap)
    add("metric norms", mn.max_abs_diff <= 1e-10, f"max diff {mn.max_abs_diff:.3e}")
    ric_d = il.ricci_normal(snap, curv, "direct_contraction")
    ric_c = il.ricci_normal(snap, curv, "closed_form", cfg["checks.ricci_sigma"])
    add(f"ricci normal closed form (sigma={cfg['checks.ricci_sigma']:+d})",
        np.max(np.abs(ric_c - ric_d)) <= 1e-10, f"max diff {np.max(np.abs(ric_c - ric_d)):.3e}")
    for r in il.property_suite(snap, curv, warp, presc.values, bm.partials(mesh, presc.values)):
        if r.gating:
            add(f"inequality {r.name}", r.passed, f"worst lhs/rhs {r.worst_ratio:.3g}")
    dt, lam = stability_dt(snap, mesh, cfg["flow.cfl"])
    mode = cfg["checks.timelike_mode"] or "nonneg"
    tl = check_timelike_convergence(warp, mesh, (float(u.min()) - 1, float(u.max()) + 1), 256, mode)
    lines = [f"{'PASS' if ok else 'FAIL'}  {name}  {detail}" for name, ok, detail in checks]
    lines.append(f"INFO  Lambda_max = {lam:.6g}, dt = {dt:.6g}, v_sup = {snap.v.max():.6g}, "
                 f"sup|H - Hpre| = {np.abs(snap.H - presc.values).max():.6g}")
    lines.append(f"INFO  timelike convergence ({mode}): min {tl.min_value:.6g}, verdict {tl.verdict}")
    print("\n".join(lines))
    return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_IDENTITY


def cmd_report(args):
    path = args.run_dir
    series = os.path.join(path, "series.csv") if os.path.isdir(path) else path
    block = summarize_series(read_series(series), args.threshold)
    text = json.dumps(block, indent=2)
    print(text)
    if os.path.isdir(path):
        with open(os.path.join(path, "report.json"), "w") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="grwflow", description="Prescribed mean curvature flow of space-like graphs "
                                "in warped product spacetimes, with identity and convergence checks.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="integrate the flow described by a config file")
    r.add_argument("config")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("check-identities", help="residual ladders for the geometric identities")
    c.add_argument("config")
    c.add_argument("--ladder", default="32,64,128")
    c.set_defaults(func=cmd_check_identities)
    g = sub.add_parser("check-geometry", help="pointwise invariants of the initial graph")
    g.add_argument("config")
    g.set_defaults(func=cmd_check_geometry)
    rp = sub.add_parser("report", help="decay fit and convergence verdict for a run directory")
    rp.add_argument("run_dir")
    rp.add_argument("--threshold", type=float, default=1e-5)
    rp.set_defaults(func=cmd_report)
    rs = sub.add_parser("restart", help="resume a run from a checkpoint")
    rs.add_argument("checkpoint")
    rs.add_argument("--config", default=None, help="config file (default: config.txt next to the checkpoint)")
    rs.set_defaults(func=cmd_restart)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for prob in exc.problems:
            print(f"config error: {prob}", file=sys.stderr)
        return EXIT_CONFIG
    except NotSpacelikeError as exc:
        print(f"space-like guard: {exc}", file=sys.stderr)
        return EXIT_SPACELIKE
    except NumericalBlowupError as exc:
        print(f"numerical blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (AssumptionViolatedError, MissingDataError, CorruptCheckpointError, InvalidParametersError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GRWFlowError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
