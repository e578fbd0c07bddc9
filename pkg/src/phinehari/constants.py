"""Embedding constant, forcing thresholds and the conditions on the source.

Every constant here is computed from the discrete embedding constant ``S``
of the current mesh, so the thresholds are mesh-dependent surrogates of the
continuum ones. Reports carry the mesh resolution for that reason.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from .errors import DegenerateInput, NumericFailure
from .fibering import Ray
from .functional import ProblemData
from .mesh import (Mesh, ScalarField, interior_operators, lp_norm, luxemburg_from_cells,
                   stiffness)
from .orlicz import ExponentData, PhiSpec


class ThresholdWarning(UserWarning):
    """The source exceeds a threshold required for the fibering geometry."""


def smooth_field(mesh: Mesh, rng, modes=4, positive=False):
    """Random smooth field vanishing on the boundary."""
    X = mesh.node_coords()
    if positive:
        out = np.ones(mesh.node_shape)
        for x, L in zip(X, mesh.extents):
            c = rng.uniform(0.2, 0.8) * L
            w = rng.uniform(0.1, 0.35) * L
            out *= (x / L) * (1 - x / L) * np.exp(-0.5 * ((x - c) / w) ** 2)
        return ScalarField(mesh, out)
    out = np.zeros(mesh.node_shape)
    ks = np.arange(1, modes + 1)
    if mesh.dim == 1:
        (x,), (L,) = X, mesh.extents
        for k in ks:
            out += rng.normal() / k ** 2 * np.sin(k * np.pi * x / L)
    else:
        (x, y), (Lx, Ly) = X, mesh.extents
        for i in ks:
            for j in ks:
                out += (rng.normal() / (i * j) ** 2 * np.sin(i * np.pi * x / Lx)
                        * np.sin(j * np.pi * y / Ly))
    return ScalarField(mesh, out)


def eigen_modes(mesh: Mesh, count=3):
    X = mesh.node_coords()
    fields = []
    if mesh.dim == 1:
        (x,), (L,) = X, mesh.extents
        for k in range(1, count + 1):
            fields.append(ScalarField(mesh, np.sin(k * np.pi * x / L)))
    else:
        (x, y), (Lx, Ly) = X, mesh.extents
        for i in range(1, count):
            for j in range(1, count):
                fields.append(ScalarField(mesh, np.sin(i * np.pi * x / Lx)
                                          * np.sin(j * np.pi * y / Ly)))
    return fields


def sample_directions(mesh: Mesh, count, rng, q, positive_only=False):
    """Eigen-like modes plus ``count`` random smooth fields, unit in ``L^q``."""
    dirs = eigen_modes(mesh)
    for i in range(count):
        dirs.append(smooth_field(mesh, rng, positive=positive_only or i % 2 == 0))
    return [u * (1.0 / lp_norm(u, q)) for u in dirs]


def _quotient(mesh, spec, ell, q):
    G, Av = interior_operators(mesh)
    vol = mesh.cell_volume

    def value_and_grad(x):
        grad = np.stack([g @ x for g in G])
        mag = np.sqrt(np.sum(grad ** 2, axis=0))
        ubar = Av @ x
        lam = luxemburg_from_cells(mag, vol, spec, tol=1e-14)
        Bq = np.sum(np.abs(ubar) ** q) * vol
        if lam <= 0 or Bq <= 0:
            return np.inf, np.zeros_like(x)
        s = mag / lam
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(mag > 0, grad / mag, 0.0)
        den = np.sum(spec.t2phi(s)) * vol
        dlog_lam = sum(g.T @ (spec.tphi(s) * un * vol) for g, un in zip(G, unit)) / (lam * den)
        dlog_lq = Av.T @ (np.abs(ubar) ** (q - 2) * ubar * vol) / Bq
        val = ell * (np.log(lam) - np.log(Bq) / q)
        return val, ell * (dlog_lam - dlog_lq)

    return value_and_grad


@dataclass
class SEstimate:
    S: float
    spread: float
    values: list
    field: ScalarField = field(repr=False)


def estimate_S(mesh: Mesh, spec: PhiSpec, exponents: ExponentData, q=None,
               starts=8, seed=0, gtol=1e-10, maxiter=20000) -> SEstimate:
    """Minimize ``||grad u||_Phi^ell / ||u||_q^ell`` over discrete fields.

    Quasi-Newton descent in the variables ``w = L^T u`` (``K = L L^T`` the
    stiffness matrix), which makes the problem well conditioned; every start
    is normalized in ``L^q`` first.
    """
    q = exponents.ell_star if q is None else float(q)
    ell = exponents.ell
    rng = np.random.default_rng(seed)
    L = sla.cholesky(stiffness(mesh).toarray(), lower=True)
    f = _quotient(mesh, spec, ell, q)

    def fw(w):
        u = sla.solve_triangular(L, w, lower=True, trans="T")
        val, gu = f(u)
        return val, sla.solve_triangular(L, gu, lower=True)

    vals, best = [], None
    for k in range(max(starts, 1)):
        u0 = smooth_field(mesh, rng, positive=(k % 2 == 0))
        u0 = u0 * (1.0 / lp_norm(u0, q))
        res = minimize(fw, L.T @ u0.interior, jac=True, method="L-BFGS-B",
                       options={"gtol": gtol, "ftol": 1e-15, "maxiter": maxiter,
                                "maxcor": 30})
        if not np.isfinite(res.fun):
            continue
        vals.append(float(np.exp(res.fun)))
        if best is None or res.fun < best[0]:
            best = (res.fun, res.x)
    if best is None:
        raise NumericFailure("embedding constant estimate failed for every start")
    u = ScalarField.from_interior(
        mesh, sla.solve_triangular(L, best[1], lower=True, trans="T"))
    S = float(np.exp(best[0]))
    spread = (max(vals) - min(vals)) / S
    return SEstimate(S, spread, vals, u * (1.0 / lp_norm(u, q)))


def lambda1(S, exponents: ExponentData, q=None):
    """Threshold excluding degenerate Nehari points; returns ``(min, branches)``."""
    q = exponents.ell_star if q is None else float(q)
    ell, m = exponents.ell, exponents.m
    branches = {}
    for name, a in (("ell", ell), ("m", m)):
        branches[name] = (S ** (a * (q - 1) / (ell * (q - a)))
                          * (ell * (ell - 1) / (q - 1)) ** ((a - 1) / (q - a))
                          * (ell * (q - m) / (q - 1)))
    return min(branches.values()), branches


def nehari_minus_radius(S, exponents, q, alpha):
    """Lower bound on ``||u||`` for ``u`` in the minus class."""
    ell = exponents.ell
    return (ell * (ell - 1) * S ** (q / ell) / (q - 1)) ** (1 / (q - alpha))


def delta1_bound(S, exponents: ExponentData, f_norm, q=None):
    """Positive lower bound of ``J`` on the minus class (``None`` if not positive)."""
    q = exponents.ell_star if q is None else float(q)
    ell, m = exponents.ell, exponents.m
    out = []
    for a in (ell, m):
        R = nehari_minus_radius(S, exponents, q, a)
        coef = ell * (1 / m - 1 / q) * R ** (a - 1)
        out.append(R * (coef - f_norm * (1 - 1 / q) * S ** (-1 / ell)))
    d = min(out)
    return d if d > 0 else None


@dataclass
class ConstantsReport:
    S: float
    lambda1: float
    lambda2: float
    Lambda1: float
    Lambda2: float
    Lambda: float
    f_norm: float = 0.0
    f1_ok: bool = True
    f2_ok: bool = True
    f2p_ok: bool = True
    delta1: float | None = None
    q: float = 0.0
    label: str = "critical"
    lambda1_branches: dict = field(default_factory=dict)
    S_spread: float = 0.0
    mesh_cells: tuple = ()
    case_tallies: dict = field(default_factory=dict)
    case_failures: dict = field(default_factory=dict)

    def as_dict(self):
        d = asdict(self)
        d["mesh_cells"] = list(self.mesh_cells)
        return d

    def to_json(self):
        return json.dumps(self.as_dict(), sort_keys=True)

    def to_kv(self):
        lines = []
        for k, v in self.as_dict().items():
            if isinstance(v, float):
                v = f"{v:.12g}"
            lines.append(f"{k} = {v}")
        return "\n".join(lines)


def build_report(S, exponents: ExponentData, q=None, mesh: Mesh | None = None,
                 label="critical", spread=0.0) -> ConstantsReport:
    q = exponents.ell_star if q is None else float(q)
    m = exponents.m
    lam1, branches = lambda1(S, exponents, q)
    lam2 = lam1 / m
    cap = (q - m) / (m - 1)
    L1, L2 = min(lam1, cap), min(lam2, cap)
    return ConstantsReport(
        S=S, lambda1=lam1, lambda2=lam2, Lambda1=L1, Lambda2=L2, Lambda=min(L1, L2),
        q=q, label=label, lambda1_branches=branches, S_spread=spread,
        mesh_cells=tuple(mesh.cells) if mesh is not None else ())


def dual_exponent(q):
    return q / (q - 1)


def direction_case(ray: Ray, exponents: ExponentData):
    """Which ordering of ``t_bar_ell``, ``t_bar_m`` around 1 the direction is in."""
    ell, m, q = exponents.ell, exponents.m, ray.q
    tl = ((ell - 1) * ray.A / ((q - 1) * ray.B)) ** (1 / (q - ell))
    tm = ((m - 1) * ray.A / ((q - 1) * ray.B)) ** (1 / (q - m))
    if tl >= 1 and tm >= 1:
        return "i"
    if tl <= 1 and tm <= 1:
        return "iii"
    return "ii"


def check_f_conditions(f: ScalarField, report: ConstantsReport, data: ProblemData,
                       directions) -> ConstantsReport:
    """Fill in ``||f||``, the condition ladder and the per-case tallies."""
    ex = data.exponents
    q, m = report.q, ex.m
    fn = lp_norm(f, dual_exponent(q))
    cap = (q - m) / (m - 1)
    report.f_norm = fn
    report.f1_ok = fn <= report.lambda1
    report.f2_ok = fn <= min(report.lambda1, cap)
    report.f2p_ok = fn <= min(report.lambda2, cap)
    report.delta1 = delta1_bound(report.S, ex, fn, q)
    tallies = {"i": 0, "ii": 0, "iii": 0}
    fails = {"i": 0, "ii": 0, "iii": 0}
    for u in directions:
        case = direction_case(Ray(u, data), ex)
        tallies[case] += 1
        ok = report.f2_ok if case == "ii" else report.f1_ok
        if not ok:
            fails[case] += 1
    report.case_tallies, report.case_failures = tallies, fails
    bad = {k: v for k, v in fails.items() if v}
    if bad:
        warnings.warn(f"||f|| = {fn:.6g} exceeds the threshold for direction cases {bad}",
                      ThresholdWarning, stacklevel=2)
    return report


def auto_scale_f(f_shape: ScalarField, target_fraction, report: ConstantsReport):
    """Multiple of ``f_shape`` whose dual norm is ``target_fraction * Lambda``."""
    if not 0 < target_fraction < 1:
        raise ValueError("target_fraction must lie in (0, 1)")
    if np.any(f_shape.values < 0):
        raise DegenerateInput("f shape must be nonnegative")
    n = lp_norm(f_shape, dual_exponent(report.q))
    if n == 0:
        raise DegenerateInput("f shape is identically zero")
    return f_shape * (target_fraction * report.Lambda / n)
