"""Constrained descent on the two Nehari branches.

Each start draws a smooth direction, projects it onto the requested branch
(``t_1 u`` for ``plus``, the right-most root for ``minus``) and then repeats

    step along minus the H^1_0 representer of the residual
    -> re-project onto the same branch
    -> accept on sufficient decrease, otherwise halve the step

until the dual norm of the residual has dropped by ``tol_res``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .constants import smooth_field
from .errors import NoSolutionFound, ProjectionUnavailable
from .fibering import DEAD_BAND, Ray, profile_of
from .functional import ProblemData, energy, psi, psi_prime_pair, residual, riesz
from .mesh import ScalarField, gradient, luxemburg_norm

ARMIJO = 1e-4
STALL_WINDOW = 50
STALL_RTOL = 1e-12


def project_with_t(u: ScalarField, data: ProblemData, branch: str):
    """Return ``(t u, t)`` with ``t u`` on the requested Nehari branch."""
    if branch not in ("plus", "minus"):
        raise ValueError("branch must be 'plus' or 'minus'")
    prof = profile_of(Ray(u, data))
    if prof.threshold_violated:
        raise ProjectionUnavailable(
            f"max m_u = {prof.m_peak:.6g} < int f u = {prof.F:.6g}: ray misses the Nehari set")
    if branch == "plus":
        if "plus" not in prof.classes:
            raise ProjectionUnavailable(
                f"int f u = {prof.F:.6g} <= 0: the ray only meets the minus branch")
        t = prof.roots[prof.classes.index("plus")]
    else:
        if "minus" not in prof.classes:
            raise ProjectionUnavailable("ray does not meet the minus branch")
        t = prof.roots[-1]
    return u * t, t


def project_to_branch(u: ScalarField, data: ProblemData, branch: str) -> ScalarField:
    return project_with_t(u, data, branch)[0]


def nehari_class(u: ScalarField, data: ProblemData):
    """Sign class of ``<psi'(u), u>`` with the dead band; no membership check."""
    val = psi_prime_pair(u, data)
    A = Ray(u, data).A
    if abs(val) <= DEAD_BAND * abs(A):
        return "zero"
    return "plus" if val > 0 else "minus"


@dataclass
class Iterate:
    J: float
    norm: float
    psi: float
    cls: str
    residual: float


@dataclass
class MonitorFlags:
    applicable: bool
    upper_ok: bool = True
    lower_ok: bool = True
    upper_violations: list = field(default_factory=list)
    lower_violations: list = field(default_factory=list)
    upper_bounds: list = field(default_factory=list)
    lower_bound: float | None = None
    tail_start: int = 0

    def as_dict(self):
        return {"applicable": self.applicable, "upper_ok": self.upper_ok,
                "lower_ok": self.lower_ok, "tail_start": self.tail_start,
                "upper_violations": list(self.upper_violations),
                "lower_violations": list(self.lower_violations),
                "lower_bound": self.lower_bound}


@dataclass
class SolveResult:
    u: ScalarField = field(repr=False)
    branch: str
    J_value: float
    residual_norm: float
    residual_rel: float
    psi_value: float
    scale: float
    iterations: int
    converged: bool
    status: str
    start_index: int
    history: list = field(default_factory=list, repr=False)
    alternates: list = field(default_factory=list)
    sampled_J: list = field(default_factory=list, repr=False)
    monitors: MonitorFlags | None = None

    def record(self):
        return {"branch": self.branch, "J": self.J_value,
                "residual_norm": self.residual_norm, "residual_rel": self.residual_rel,
                "psi": self.psi_value, "scale": self.scale, "iterations": self.iterations,
                "converged": self.converged, "status": self.status,
                "start_index": self.start_index, "alternates": self.alternates,
                "min_node": float(self.u.values.min()),
                "monitors": self.monitors.as_dict() if self.monitors else None}


@dataclass
class _StartOutcome:
    index: int
    u: ScalarField | None
    J: float
    res: float
    res_rel: float
    iterations: int
    converged: bool
    status: str
    history: list
    sampled_J: list


def _direction(r, mesh, metric):
    """Descent direction and ``<r, z>``; ``rn`` is always the ``H^-1`` dual norm."""
    zh = riesz(r, mesh)
    rn = math.sqrt(max(float(np.dot(r, zh)), 0.0))
    if metric == "h1":
        return zh, rn * rn, rn
    return r, float(np.dot(r, r)), rn


def _snapshot(u, data, J, rn):
    return Iterate(J, luxemburg_norm(gradient(u), data.spec), psi(u, data),
                   nehari_class(u, data), rn)


def _fresh_direction(data, rng, branch):
    positive = bool(np.all(data.f.values >= 0))
    u = smooth_field(data.mesh, rng, positive=positive)
    if branch == "plus" and Ray(u, data).F < 0:
        u = -u
    return u


def _descend(index, data, branch, budget, tol_res, tol_step, seed, metric="h1"):
    rng = np.random.default_rng([seed, index])
    mesh = data.mesh
    sampled, history = [], []
    u = None
    for _ in range(8):
        try:
            u, _ = project_with_t(_fresh_direction(data, rng, branch), data, branch)
            break
        except ProjectionUnavailable:
            continue
    if u is None:
        return _StartOutcome(index, None, np.inf, np.inf, np.inf, 0, False,
                             "projection-unavailable", [], [])
    J = energy(u, data)
    sampled.append(J)
    r = residual(u, data)
    z, g2, rn0 = _direction(r, mesh, metric)
    rn = rn0
    history.append(_snapshot(u, data, J, rn0))
    step, quiet, it, status = 1.0, 0, 0, "budget"
    converged = rn0 == 0
    while it < budget and not converged:
        it += 1
        noise = 1e-14 * (abs(J) + Ray(u, data).scale)
        accepted = None
        while step >= tol_step and accepted is None:
            tried = []
            for s_try in (step, None):
                if s_try is None:
                    # minimizer of the quadratic through J, slope -g2 and the first trial
                    if not tried or tried[0][0] != step:
                        break
                    curv = tried[0][2] - J + step * g2
                    if curv <= 0:
                        break
                    s_try = float(np.clip(step * step * g2 / (2 * curv), 0.1 * step, 10 * step))
                trial = ScalarField.from_interior(mesh, u.interior - s_try * z)
                try:
                    w, _ = project_with_t(trial, data, branch)
                except ProjectionUnavailable:
                    continue
                tried.append((s_try, w, energy(w, data)))
            good = [c for c in tried
                    if c[2] <= J - ARMIJO * c[0] * g2 + noise and c[2] <= J + noise]
            if good:
                s_ok, w, Jw = min(good, key=lambda c: c[2])
                accepted = (w, Jw)
                step = s_ok
            else:
                step *= 0.5
        if accepted is None:
            status = "line-search"
            break
        w, Jw = accepted
        if nehari_class(w, data) != branch:
            status = "class-flip"
            break
        quiet = quiet + 1 if abs(Jw - J) < STALL_RTOL * max(abs(J), 1e-300) else 0
        u, J = w, Jw
        r = residual(u, data)
        z, g2, rn = _direction(r, mesh, metric)
        history.append(_snapshot(u, data, J, rn))
        converged = rn <= tol_res * rn0
        if quiet >= STALL_WINDOW and not converged:
            # restart from a fresh direction with the remaining budget
            try:
                u, _ = project_with_t(_fresh_direction(data, rng, branch), data, branch)
            except ProjectionUnavailable:
                status = "stalled"
                break
            J = energy(u, data)
            sampled.append(J)
            r = residual(u, data)
            z, g2, rn0 = _direction(r, mesh, metric)
            rn = rn0
            step, quiet = 1.0, 0
            history.append(_snapshot(u, data, J, rn0))
    if converged:
        status = "converged"
    return _StartOutcome(index, u, J, rn, rn / rn0 if rn0 else 0.0, it, converged,
                         status, history, sampled)


def minimize_branch(data: ProblemData, branch: str, starts=8, budget=5000, tol_res=1e-6,
                    tol_step=1e-14, seed=0, workers=1, metric="h1") -> SolveResult:
    """Multi-start constrained descent on one Nehari branch; best start wins.

    ``metric='h1'`` steps along the ``H^1_0`` representer of the residual,
    ``metric='l2'`` along the raw nodal residual. Either way convergence is
    measured by the dual norm of the residual relative to the first iterate
    of the start.
    """
    if metric not in ("h1", "l2"):
        raise ValueError("metric must be 'h1' or 'l2'")
    if branch not in ("plus", "minus"):
        raise ValueError("branch must be 'plus' or 'minus'")
    if branch == "plus" and not np.any(data.f.values):
        raise ProjectionUnavailable("f = 0: no ray meets the plus branch")
    args = [(k, data, branch, budget, tol_res, tol_step, seed, metric) for k in range(starts)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outs = list(pool.map(lambda a: _descend(*a), args))
    else:
        outs = [_descend(*a) for a in args]
    ok = [o for o in outs if o.u is not None]
    if not ok:
        raise NoSolutionFound(f"every start failed to project onto the {branch} branch",
                              diagnostics=[o.status for o in outs])
    # deterministic reduction: converged first, then by (J, start index)
    best = min(ok, key=lambda o: (not o.converged, o.J, o.index))
    tol = 1e-6 * max(1.0, abs(best.J))
    alternates = [o.index for o in ok if o.converged and abs(o.J - best.J) <= tol]
    u, history = best.u, list(best.history)
    J, rn, rel = best.J, best.res, best.res_rel
    if np.all(data.f.values >= 0):
        u, _ = project_with_t(abs(u), data, branch)
        J = energy(u, data)
        r = residual(u, data)
        rn0 = rn / rel if rel else rn
        rn = _direction(r, data.mesh, "h1")[2]
        rel = rn / rn0 if rn0 else 0.0
    sampled = [j for o in ok for j in o.sampled_J]
    return SolveResult(u=u, branch=branch, J_value=J, residual_norm=rn, residual_rel=rel,
                       psi_value=psi(u, data), scale=Ray(u, data).scale,
                       iterations=best.iterations, converged=best.converged and rel <= tol_res,
                       status=best.status, start_index=best.index, history=history,
                       alternates=alternates, sampled_J=sampled)


def norm_bounds(norm, report, exponents, f_norm, alpha_plus):
    """Upper and lower bounds on ``||u_n||`` along a minimizing sequence."""
    ell, m, q, S = exponents.ell, exponents.m, report.q, report.S
    a = ell if norm >= 1 else m
    c = f_norm * S ** (-1 / ell)
    upper = ((q - 1) / (q - m) * c) ** (1 / (a - 1))
    lower = -alpha_plus * q / ((q - 1) * c)
    return upper, lower


def monitor_bounds(history, report, exponents, f_norm=None, alpha_plus=None,
                   slack=0.05, tail_fraction=0.2) -> MonitorFlags:
    """Flag iterates leaving the norm window of a plus-branch minimizing sequence."""
    f_norm = report.f_norm if f_norm is None else f_norm
    if not history or f_norm <= 0:
        return MonitorFlags(applicable=False)
    if alpha_plus is None:
        alpha_plus = min(it.J for it in history)
    if alpha_plus >= 0:
        return MonitorFlags(applicable=False)
    n = len(history)
    tail = max(0, n - max(1, math.ceil(tail_fraction * n)))
    flags = MonitorFlags(applicable=True, tail_start=tail)
    for k, it in enumerate(history):
        upper, lower = norm_bounds(it.norm, report, exponents, f_norm, alpha_plus)
        flags.upper_bounds.append(upper)
        flags.lower_bound = lower
        if it.norm > upper * (1 + slack):
            flags.upper_violations.append(k)
        if it.norm < lower * (1 - slack):
            flags.lower_violations.append(k)
    flags.upper_ok = not any(k >= tail for k in flags.upper_violations)
    flags.lower_ok = not any(k >= tail for k in flags.lower_violations)
    return flags
