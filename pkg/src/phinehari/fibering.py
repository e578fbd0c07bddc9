"""Fibering maps ``t -> J(t u)`` and the Nehari split along a ray.

For a fixed direction ``u`` write ``A = int phi(|grad u|)|grad u|^2``,
``B = int |u|^q`` and ``F = int f u``. The auxiliary map

    m_u(t) = int t phi(t|grad u|)|grad u|^2 - t^(q-1) B

is unimodal with peak ``t_tilde`` and ``t u`` lies on the Nehari set exactly
when ``m_u(t) = F``. Level crossings left of the peak are in the plus class,
crossings right of it in the minus class.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateDirection, NotOnManifold, NumericFailure
from .functional import CellState, ProblemData, psi, psi_prime_pair
from .mesh import ScalarField

DEAD_BAND = 1e-6
T_TOL = 1e-10
MAX_DOUBLINGS = 60


class Ray:
    """Cached per-cell data of a direction; all fibering maps read from it."""

    def __init__(self, u: ScalarField, data: ProblemData):
        if u.mesh != data.mesh:
            raise ValueError("direction and problem live on different meshes")
        if u.is_zero():
            raise DegenerateDirection("direction is identically zero")
        c = CellState(u)
        self.u = u
        self.data = data
        self.vol = u.mesh.cell_volume
        self.mag = c.mag
        self.q = data.q
        sp = data.spec
        self.Phi = sp.Phi
        self.t2phi = sp.t2phi
        self.t3dphi = sp.t3dphi
        self.A = float(np.sum(sp.t2phi(c.mag)) * self.vol)
        self.B = float(np.sum(np.abs(c.ubar) ** self.q) * self.vol)
        self.F = float(np.sum(data.f_cells() * c.ubar) * self.vol)

    @property
    def scale(self):
        return abs(self.A) + abs(self.B) + abs(self.F)

    def gamma(self, t):
        s = t * self.mag
        return float(np.sum(self.Phi(s)) * self.vol - t ** self.q * self.B / self.q - t * self.F)

    def gamma_prime(self, t):
        # t int phi(t|g|)|g|^2 = int (t|g|)^2 phi(t|g|) / t
        return self.m(t) - self.F

    def m(self, t):
        s = t * self.mag
        return float(np.sum(self.t2phi(s)) * self.vol / t - t ** (self.q - 1) * self.B)

    def m_prime(self, t):
        s = t * self.mag
        dens = self.t2phi(s) + self.t3dphi(s)
        return float(np.sum(dens) * self.vol / t ** 2 - (self.q - 1) * t ** (self.q - 2) * self.B)

    def eta(self, t):
        """``t^(2-q) int [phi(t|g|)|g|^2 + t phi'(t|g|)|g|^3]``; decreasing in ``t``."""
        s = t * self.mag
        return float(np.sum(self.t2phi(s) + self.t3dphi(s)) * self.vol * t ** (-self.q))


def gamma(u, data, t):
    """``(J(t u), d/dt J(t u))``; the derivative is the assembled quadrature."""
    if t <= 0:
        raise ValueError("t must be positive")
    r = Ray(u, data)
    return r.gamma(t), r.gamma_prime(t)


def m_map(u, data, t):
    if t <= 0:
        raise ValueError("t must be positive")
    return Ray(u, data).m(t)


def _peak(ray: Ray):
    if ray.B <= 0:
        raise DegenerateDirection("direction has zero L^q mass")
    lo = hi = 1.0
    for _ in range(MAX_DOUBLINGS * 4):
        if ray.m_prime(lo) > 0:
            break
        lo *= 0.5
    else:
        raise NumericFailure("m_u' never positive near 0", achieved=lo)
    for _ in range(MAX_DOUBLINGS * 4):
        if ray.m_prime(hi) < 0:
            break
        hi *= 2.0
    else:
        raise NumericFailure("m_u' never negative at large t", achieved=hi)
    t = brentq(ray.m_prime, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return t, ray.m(t)


def find_peak(u, data):
    """Unique maximizer ``t_tilde`` of ``m_u`` and the value ``m_u(t_tilde)``."""
    return _peak(Ray(u, data))


def g_alpha_peak(u, data, alpha):
    """Closed-form maximizer of ``g_alpha(t) = t^(alpha-1) A - t^(q-1) B``."""
    r = Ray(u, data)
    if r.B <= 0:
        raise DegenerateDirection("direction has zero L^q mass")
    q = r.q
    t_bar = ((alpha - 1) * r.A / ((q - 1) * r.B)) ** (1 / (q - alpha))
    return t_bar, g_alpha_value(r, alpha, t_bar)


def g_alpha_value(ray: Ray, alpha, t):
    return t ** (alpha - 1) * ray.A - t ** (ray.q - 1) * ray.B


@dataclass
class FiberingProfile:
    direction: ScalarField = field(repr=False)
    A: float
    B: float
    F: float
    t_tilde: float
    m_peak: float
    roots: list
    classes: list
    threshold_violated: bool = False
    tangent: bool = False
    samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def scale(self):
        return abs(self.A) + abs(self.B) + abs(self.F)

    def summary(self):
        return {"A": self.A, "B": self.B, "F": self.F, "t_tilde": self.t_tilde,
                "m_peak": self.m_peak, "roots": list(self.roots),
                "classes": list(self.classes),
                "threshold_violated": self.threshold_violated, "tangent": self.tangent}


def _root(func, lo, hi):
    return brentq(func, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def profile_of(ray: Ray, samples=None) -> FiberingProfile:
    t_tilde, m_peak = _peak(ray)
    F = ray.F
    roots, classes = [], []
    violated = tangent = False
    level = lambda t: ray.m(t) - F
    tang_tol = 1e-10 * ray.scale
    if abs(m_peak - F) <= tang_tol and F > 0:
        tangent = True
        roots, classes = [t_tilde], ["zero"]
    elif F >= m_peak:
        violated = True
    else:
        if F > 0:
            lo = t_tilde
            for _ in range(4 * MAX_DOUBLINGS):
                lo *= 0.5
                if level(lo) < 0:
                    break
            else:
                raise NumericFailure("could not bracket the left Nehari root")
            roots.append(_root(level, lo, t_tilde))
            classes.append("plus")
        hi = max(2 * t_tilde, 1.0)
        for _ in range(MAX_DOUBLINGS):
            if level(hi) < 0:
                break
            hi *= 2.0
        else:
            raise NumericFailure("could not bracket the right Nehari root", achieved=hi)
        roots.append(_root(level, t_tilde, hi))
        classes.append("minus")
    prof = FiberingProfile(ray.u, ray.A, ray.B, F, t_tilde, m_peak, roots, classes,
                           violated, tangent)
    if samples is not None:
        prof.samples = scan(ray, samples)
    return prof


def nehari_roots(u, data, samples=None) -> FiberingProfile:
    """Parameters ``t`` with ``t u`` on the Nehari set, ordered, with classes."""
    return profile_of(Ray(u, data), samples)


def scan(ray: Ray, ts):
    """Rows ``(t, gamma, gamma', m_u)`` for each ``t`` in ``ts``."""
    rows = [(t, ray.gamma(t), ray.gamma_prime(t), ray.m(t)) for t in np.asarray(ts, float)]
    return np.array(rows)


def write_scan_csv(rows, path, header_comment=None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["t", "gamma", "gamma_prime", "m_u"])
        for row in rows:
            w.writerow([repr(float(x)) for x in row])


def classify(u, data, member_tol=1e-8, dead_band=DEAD_BAND):
    """Nehari class ``'plus'``, ``'minus'`` or ``'zero'`` of ``u`` on the Nehari set."""
    ray = Ray(u, data)
    p = psi(u, data)
    if abs(p) > member_tol * ray.scale:
        raise NotOnManifold(f"|psi(u)| = {abs(p):.3e} exceeds {member_tol:.1e} * scale")
    val = psi_prime_pair(u, data)
    if abs(val) <= dead_band * abs(ray.A):
        return "zero"
    return "plus" if val > 0 else "minus"
