"""Command line entry point: ``phinehari {check,constants,fiber,solve,verify}``.

Exit codes: 0 success, 1 mathematical or hypothesis failure, 2 usage or
parse failure. Every run writes a JSON-lines file whose first record is a
header with the package version, the seed and the mesh digest; nothing
time-dependent is recorded, so identical inputs give identical bytes.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .constants import (ThresholdWarning, auto_scale_f, build_report, check_f_conditions,
                        dual_exponent, estimate_S, sample_directions)
from .errors import ConfigError, PhiNehariError, ProjectionUnavailable
from .fibering import Ray, profile_of, scan, write_scan_csv
from .functional import ProblemData
from .mesh import Mesh, ScalarField, load_field, lp_norm, save_field
from .orlicz import PhiSpec, check_hypotheses, extract_exponents
from .solver import minimize_branch, monitor_bounds
from .verify import run_suites


class Session:
    """Shared state of one CLI invocation: config, output sink, stdout."""

    def __init__(self, cfg: RunConfig, command, quiet=False):
        self.cfg, self.command, self.quiet = cfg, command, quiet
        self.mesh = Mesh(cfg.mesh_dim, cfg.extents, cfg.cells)
        self.out = Path(cfg.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.records = [{"record": "header", "command": command, "version": __version__,
                         "seed": cfg.seed, "mesh": self.mesh.digest()}]

    @property
    def header_line(self):
        return f"phinehari {__version__} seed={self.cfg.seed} mesh={self.mesh.digest()}"

    def say(self, text=""):
        if not self.quiet:
            print(text)

    def emit(self, kind, payload):
        self.records.append({"record": kind, **payload})

    def close(self):
        path = self.out / f"{self.command}.jsonl"
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(_plain(rec), sort_keys=True) + "\n")
        return path


def _plain(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, Path):
        return obj.name
    return obj


def build_spec(cfg: RunConfig) -> PhiSpec:
    c = cfg.phi
    kw = {"t_min": c.t_min, "t_max": c.t_max, "samples": c.samples}
    if c.family == "power":
        return PhiSpec.power(c.p, c.scale, **kw)
    if c.family == "double_power":
        return PhiSpec.double_power(c.p, c.q, c.scale, **kw)
    try:
        tab = np.loadtxt(c.table, comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read phi table {c.table}: {exc}") from None
    if tab.shape[1] != 2:
        raise ConfigError(f"phi table {c.table} must have two columns")
    return PhiSpec.tabulated(tab[:, 0], c.scale * tab[:, 1], **kw)


def _bump(mesh, center, width):
    X = mesh.node_coords()
    env = np.ones(mesh.node_shape)
    r2 = np.zeros(mesh.node_shape)
    for x, L, c in zip(X, mesh.extents, center):
        env *= x * (L - x) / (0.25 * L * L)
        r2 += (x - c) ** 2
    return ScalarField(mesh, env * np.exp(-0.5 * r2 / width ** 2))


def source_shape(cfg: RunConfig, mesh) -> ScalarField:
    s = cfg.source
    if s.shape == "zero":
        return ScalarField.zeros(mesh)
    if s.shape == "bump":
        return _bump(mesh, s.center, s.width)
    if s.shape == "constant":
        return ScalarField(mesh, np.ones(mesh.node_shape))
    return load_field(s.file, mesh)


def scaled_source(cfg: RunConfig, shape: ScalarField, report):
    """Apply ``target_fraction`` (of Lambda) or ``amplitude`` to the source shape."""
    s = cfg.source
    if shape.is_zero():
        return shape
    if s.amplitude is not None:
        return shape * s.amplitude
    if s.target_fraction is None:
        return shape
    if s.target_fraction < 1:
        return auto_scale_f(shape, s.target_fraction, report)
    # fractions >= 1 are allowed so that over-threshold runs can be requested
    n = lp_norm(shape, dual_exponent(report.q))
    return shape * (s.target_fraction * report.Lambda / n)


class Problem:
    """Spec, exponents, discrete constants and source for a config."""

    def __init__(self, sess: Session):
        cfg = sess.cfg
        self.spec = build_spec(cfg)
        self.hyp = check_hypotheses(self.spec, cfg.N)
        self.ex = extract_exponents(self.spec, cfg.N)
        self.q = self.ex.ell_star if cfg.crit_exp is None else cfg.crit_exp
        self.label = "critical" if cfg.crit_exp is None or np.isclose(
            cfg.crit_exp, self.ex.ell_star) else "surrogate"
        est = estimate_S(sess.mesh, self.spec, self.ex, q=self.q, starts=cfg.s_starts,
                         seed=cfg.seed)
        self.S_est = est
        self.report = build_report(est.S, self.ex, self.q, sess.mesh, self.label, est.spread)
        self.f = scaled_source(cfg, source_shape(cfg, sess.mesh), self.report)
        self.data = ProblemData(self.spec, self.ex, self.f, cfg.crit_exp)
        rng = np.random.default_rng([cfg.seed, 7])
        dirs = sample_directions(sess.mesh, cfg.directions, rng, self.q) if cfg.directions else []
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ThresholdWarning)
            check_f_conditions(self.f, self.report, self.data, dirs)
        self.warnings = [str(w.message) for w in caught if w.category is ThresholdWarning]


def _hyp_text(hyp):
    rows = [("phi1", hyp.phi1_ok), ("phi2", hyp.phi2_ok), ("phi3", hyp.phi3_ok),
            ("H", hyp.H_ok), ("convexity", hyp.convex_ok)]
    lines = [f"  {name:<10} {'pass' if ok else 'FAIL'}" for name, ok in rows]
    lines.append(f"  ell = {hyp.ell:.10g}  m = {hyp.m:.10g}  ell* = {hyp.ell_star:.10g}"
                 f"  N = {hyp.N}")
    lines += [f"  ! {m}" for m in hyp.messages]
    return "\n".join(lines)


def cmd_check(sess: Session):
    spec = build_spec(sess.cfg)
    hyp = check_hypotheses(spec, sess.cfg.N)
    sess.say(sess.header_line)
    sess.say(_hyp_text(hyp))
    sess.emit("hypotheses", {**hyp.as_dict(), "messages": hyp.messages,
                             "phi": spec.describe()})
    return 0 if hyp.all_ok else 1


def _require_hypotheses(sess, spec):
    hyp = check_hypotheses(spec, sess.cfg.N)
    if not hyp.all_ok:
        sess.say(_hyp_text(hyp))
        sess.emit("hypotheses", {**hyp.as_dict(), "messages": hyp.messages})
        raise _Refusal(f"hypotheses fail: {', '.join(hyp.failed())}")


class _Refusal(Exception):
    pass


def cmd_constants(sess: Session):
    _require_hypotheses(sess, build_spec(sess.cfg))
    pb = Problem(sess)
    rep = pb.report
    sess.say(sess.header_line)
    sess.say(f"# discrete constants ({pb.label}, q = {pb.q:.10g}, cells = {sess.mesh.cells})")
    sess.say(rep.to_kv())
    if rep.Lambda > 0:
        sess.say(f"f_norm / Lambda = {rep.f_norm / rep.Lambda:.12g}")
    for w in pb.warnings:
        sess.say(f"warning: {w}")
    sess.emit("constants", {**rep.as_dict(), "warnings": pb.warnings})
    return 0


def _direction(sess, pb):
    fc, mesh = sess.cfg.fiber, sess.mesh
    if fc.direction == "file":
        return load_field(fc.file, mesh)
    if fc.direction == "sine":
        X = mesh.node_coords()
        return ScalarField(mesh, np.prod([np.sin(np.pi * x / L)
                                          for x, L in zip(X, mesh.extents)], axis=0))
    return _bump(mesh, sess.cfg.source.center, max(sess.cfg.source.width, 0.2))


def cmd_fiber(sess: Session):
    _require_hypotheses(sess, build_spec(sess.cfg))
    pb = Problem(sess)
    u = _direction(sess, pb)
    ray = Ray(u, pb.data)
    prof = profile_of(ray)
    fc = sess.cfg.fiber
    ts = np.geomspace(fc.t_min, fc.t_max, fc.points)
    rows = scan(ray, ts)
    csv_path = sess.out / "fiber_scan.csv"
    write_scan_csv(rows, csv_path, header_comment=sess.header_line)
    roots = ", ".join(f"{t:.10g} ({c})" for t, c in zip(prof.roots, prof.classes)) or "none"
    sess.say(sess.header_line)
    sess.say(f"A = {prof.A:.10g}  B = {prof.B:.10g}  F = {prof.F:.10g}")
    sess.say(f"t_tilde = {prof.t_tilde:.10g}  m_peak = {prof.m_peak:.10g}")
    sess.say(f"roots: {roots}")
    if prof.threshold_violated:
        sess.say("ray misses the Nehari set: max m_u < int f u")
    sess.say(f"scan: {len(rows)} rows -> {csv_path.name}")
    sess.emit("fiber", {**prof.summary(), "rows": len(rows), "csv": csv_path.name})
    return 0


def cmd_solve(sess: Session):
    _require_hypotheses(sess, build_spec(sess.cfg))
    pb = Problem(sess)
    rep, sc = pb.report, sess.cfg.solver
    sess.say(sess.header_line)
    sess.emit("constants", rep.as_dict())
    if rep.f_norm >= rep.Lambda:
        msg = (f"||f|| = {rep.f_norm:.6g} is not below Lambda = {rep.Lambda:.6g}; "
               "two Nehari solutions are not guaranteed, refusing to solve")
        sess.emit("refused", {"reason": msg})
        raise _Refusal(msg)
    results, failed = {}, []
    for branch in sc.branches:
        if branch == "plus" and pb.f.is_zero():
            msg = "f = 0: every ray meets the Nehari set once, in the minus class"
            sess.say(f"plus branch skipped: {msg}")
            sess.emit("branch", {"branch": "plus", "skipped": True, "reason": msg})
            continue
        try:
            res = minimize_branch(pb.data, branch, starts=sc.starts, budget=sc.budget,
                                  tol_res=sc.tol_res, tol_step=sc.tol_step,
                                  seed=sess.cfg.seed, workers=sc.workers, metric=sc.metric)
        except (ProjectionUnavailable, PhiNehariError) as exc:
            sess.say(f"{branch} branch failed: {exc}")
            sess.emit("branch", {"branch": branch, "failed": True, "reason": str(exc)})
            failed.append(branch)
            continue
        if branch == "plus":
            res.monitors = monitor_bounds(res.history, rep, pb.ex)
        path = sess.out / f"u_{branch}.txt"
        save_field(res.u, path, header=sess.header_line + f" branch={branch}")
        rec = res.record()
        rec["field"] = path.name
        sess.emit("branch", rec)
        results[branch] = res
        if not res.converged:
            failed.append(branch)
    sess.say(_solve_table(results, rep))
    return 1 if failed else 0


def _solve_table(results, rep):
    lines = [f"{'branch':<7} {'J':>16} {'residual(rel)':>14} {'iters':>6} "
             f"{'min u':>11} {'status':<10} monitors"]
    for b, r in results.items():
        mon = "-"
        if r.monitors is not None and r.monitors.applicable:
            mon = (f"upper {'ok' if r.monitors.upper_ok else 'FLAG'}, "
                   f"lower {'ok' if r.monitors.lower_ok else 'FLAG'}")
        lines.append(f"{b:<7} {r.J_value:>16.10g} {r.residual_rel:>14.3e} {r.iterations:>6d} "
                     f"{r.u.values.min():>11.3e} {r.status:<10} {mon}")
    d1 = "unset" if rep.delta1 is None else f"{rep.delta1:.10g}"
    lines.append(f"delta1 = {d1}  Lambda = {rep.Lambda:.10g}  ||f|| = {rep.f_norm:.10g}")
    if "plus" in results and "minus" in results and rep.delta1 is not None:
        ok = results["plus"].J_value < 0 < rep.delta1 <= results["minus"].J_value
        lines.append(f"J(u+) < 0 < delta1 <= J(u-): {'yes' if ok else 'NO'}")
    return "\n".join(lines)


def cmd_verify(sess: Session):
    cfg = sess.cfg
    spec = build_spec(cfg)
    shape = source_shape(cfg, sess.mesh)
    f = shape * cfg.source.amplitude if cfg.source.amplitude is not None else None
    frac = cfg.source.target_fraction or 0.5
    if frac >= 1:
        raise _Refusal("verify needs target_fraction < 1 so that the source is sub-threshold")
    rep = run_suites(spec, cfg.N, sess.mesh, q=cfg.crit_exp, f=f, f_shape=shape,
                     seed=cfg.seed, directions=cfg.directions or 100, target_fraction=frac)
    sess.say(sess.header_line)
    sess.say(rep.table())
    for s in rep.suites:
        sess.emit("suite", s.record())
    return 0 if rep.passed else 1


COMMANDS = {"check": cmd_check, "constants": cmd_constants, "fiber": cmd_fiber,
            "solve": cmd_solve, "verify": cmd_verify}


def make_parser():
    ap = argparse.ArgumentParser(prog="phinehari",
                                 description="Nehari-manifold solver for Phi-Laplacian problems")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="INI run configuration")
    ap.add_argument("--seed", type=int, help="override the configured seed")
    ap.add_argument("--out", help="output directory (overrides [run] output_dir)")
    ap.add_argument("--quiet", action="store_true", help="no summary on stdout")
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        if args.seed < 0:
            print("--seed must be >= 0", file=sys.stderr)
            return 2
        cfg.seed = args.seed
    if args.out:
        cfg.output_dir = Path(args.out)
    try:
        sess = Session(cfg, args.command, args.quiet)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        code = COMMANDS[args.command](sess)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _Refusal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        code = 1
    except PhiNehariError as exc:
        print(f"error: {exc}", file=sys.stderr)
        sess.emit("error", {"type": type(exc).__name__, "message": str(exc)})
        code = 1
    sess.close()
    return code


if __name__ == "__main__":
    sys.exit(main())
