"""N-function calculus for the generator phi.

``PhiSpec`` wraps one generator ``phi`` on ``(0, inf)`` together with its
first two derivatives and the N-function ``Phi(t) = int_0^t s phi(s) ds``.
Three families are supported:

* ``power``: ``phi(t) = c t^(p-2)``, so ``Phi(t) = c t^p / p``
* ``double_power``: ``phi(t) = c (t^(p-2) + t^(q-2))``
* ``tabulated``: a ``(t, phi(t))`` table, interpolated by a monotone cubic
  in log-log coordinates and continued as power laws past both ends.

All evaluators are vectorized over numpy arrays. Products such as
``t phi(t)`` are exposed directly so that ``t = 0`` evaluates to the
limit ``0`` instead of ``0 * inf``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import expit

from .errors import HypothesisViolation, NumericFailure

FAMILIES = ("power", "double_power", "tabulated")

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _gauss_log(integrand, x0, x1):
    """Integrate ``integrand(x)`` over ``[x0, x1]`` elementwise (24-point Gauss)."""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    mid = 0.5 * (x0 + x1)
    half = 0.5 * (x1 - x0)
    xs = mid[..., None] + half[..., None] * _GL_NODES
    return half * np.sum(_GL_WEIGHTS * integrand(xs), axis=-1)


def solve_increasing(func, dfunc, target, lo, hi, xtol=1e-13, maxiter=200):
    """Solve ``func(exp(x)) = target`` for ``x`` with ``func`` increasing.

    Safeguarded Newton in the log variable: the Newton step is taken when it
    stays inside the current bracket, otherwise the bracket is bisected.
    ``dfunc`` is the derivative of ``func`` with respect to ``t``.
    Returns ``t = exp(x)``.
    """
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    # widen the bracket until it encloses the root
    for _ in range(200):
        bad_lo = func(np.exp(lo)) > target
        bad_hi = func(np.exp(hi)) < target
        if not (bad_lo.any() or bad_hi.any()):
            break
        lo = np.where(bad_lo, lo - 5.0, lo)
        hi = np.where(bad_hi, hi + 5.0, hi)
    else:
        raise NumericFailure("could not bracket root of increasing map")
    x = 0.5 * (lo + hi)
    for _ in range(maxiter):
        t = np.exp(x)
        val = func(t) - target
        lo = np.where(val <= 0, x, lo)
        hi = np.where(val >= 0, x, hi)
        slope = t * dfunc(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - val / slope
        inside = np.isfinite(newton) & (newton > lo) & (newton < hi)
        x_new = np.where(inside, newton, 0.5 * (lo + hi))
        done = (np.abs(x_new - x) <= xtol) | (hi - lo <= xtol) | (val == 0)
        x = np.where(val == 0, x, x_new)
        if np.all(done):
            break
    else:
        raise NumericFailure("bracketed root solve did not converge",
                             achieved=float(np.max(hi - lo)))
    return np.exp(x)


@dataclass(frozen=True)
class PhiSpec:
    """Generator phi of the operator ``div(phi(|grad u|) grad u)``."""

    family: str
    p: float = 2.0
    q: float | None = None
    scale: float = 1.0
    table: tuple | None = field(default=None, repr=False)
    t_min: float = 1e-6
    t_max: float = 1e6
    samples: int = 4096

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown phi family {self.family!r}")
        if not (0 < self.t_min < self.t_max):
            raise ValueError("sampling window needs 0 < t_min < t_max")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.family == "double_power" and self.q is None:
            raise ValueError("double_power needs both p and q")
        if self.family == "tabulated":
            t, v = self.table
            if len(t) < 2 or len(t) != len(v):
                raise ValueError("table needs matching columns with >= 2 rows")
            if np.any(np.diff(t) <= 0) or t[0] <= 0:
                raise ValueError("table t column must be positive and increasing")
            if np.any(np.asarray(v) <= 0):
                raise ValueError("table phi values must be positive")

    @classmethod
    def power(cls, p, scale=1.0, **kw):
        return cls("power", p=float(p), scale=float(scale), **kw)

    @classmethod
    def double_power(cls, p, q, scale=1.0, **kw):
        return cls("double_power", p=float(p), q=float(q), scale=float(scale), **kw)

    @classmethod
    def tabulated(cls, t, phi, **kw):
        t = tuple(float(x) for x in t)
        phi = tuple(float(x) for x in phi)
        return cls("tabulated", table=(t, phi), **kw)

    def describe(self):
        if self.family == "power":
            return {"family": "power", "p": self.p, "scale": self.scale}
        if self.family == "double_power":
            return {"family": "double_power", "p": self.p, "q": self.q,
                    "scale": self.scale}
        return {"family": "tabulated", "rows": len(self.table[0])}

    # -- tabulated internals ----------------------------------------------

    @cached_property
    def _interp(self):
        t, v = self.table
        x = np.log(np.asarray(t))
        y = np.log(np.asarray(v))
        P = PchipInterpolator(x, y, extrapolate=False)
        d1 = P.derivative(1)
        d2 = P.derivative(2)
        return x, y, P, d1, d2, float(d1(x[0])), float(d1(x[-1]))

    def _logphi(self, x):
        """Return ``(log phi, d log phi / d log t, second log-derivative)``."""
        xk, yk, P, d1, d2, s0, s1 = self._interp
        x = np.asarray(x, dtype=float)
        inside = (x >= xk[0]) & (x <= xk[-1])
        xc = np.clip(x, xk[0], xk[-1])
        y = np.where(inside, P(xc), np.where(x < xk[0], yk[0] + s0 * (x - xk[0]),
                                               yk[-1] + s1 * (x - xk[-1])))
        y1 = np.where(inside, d1(xc), np.where(x < xk[0], s0, s1))
        y2 = np.where(inside, d2(xc), 0.0)
        return y, y1, y2

    # -- evaluators ---------------------------------------------------------

    def _tpow_phi(self, t, k):
        """``t^k phi(t)`` with the ``t -> 0`` limit where it vanishes."""
        t = np.asarray(t, dtype=float)
        c = self.scale
        if self.family == "power":
            return c * np.power(t, self.p - 2 + k)
        if self.family == "double_power":
            return c * (np.power(t, self.p - 2 + k) + np.power(t, self.q - 2 + k))
        pos = t > 0
        x = np.log(np.where(pos, t, 1.0))
        y, _, _ = self._logphi(x)
        return np.where(pos, np.exp(y + k * x), 0.0)

    def phi(self, t):
        return self._tpow_phi(t, 0)

    def tphi(self, t):
        """``t phi(t)``; zero at ``t = 0``."""
        return self._tpow_phi(t, 1)

    def t2phi(self, t):
        """``t^2 phi(t)``; zero at ``t = 0``."""
        return self._tpow_phi(t, 2)

    def elasticities(self, t):
        """``(t phi'/phi, t^2 phi''/phi)`` at ``t > 0``."""
        t = np.asarray(t, dtype=float)
        if self.family == "power":
            a = self.p - 2
            return np.full_like(t, a), np.full_like(t, a * (a - 1))
        if self.family == "double_power":
            a, b = self.p - 2, self.q - 2
            with np.errstate(divide="ignore"):
                w = expit(-(self.q - self.p) * np.log(t))
            return a * w + b * (1 - w), a * (a - 1) * w + b * (b - 1) * (1 - w)
        _, y1, y2 = self._logphi(np.log(t))
        return y1, y1 * y1 + y2 - y1

    def dphi(self, t):
        t = np.asarray(t, dtype=float)
        e1, _ = self.elasticities(t)
        return e1 * self.phi(t) / t

    def d2phi(self, t):
        t = np.asarray(t, dtype=float)
        _, e2 = self.elasticities(t)
        return e2 * self.phi(t) / t ** 2

    def t3dphi(self, t):
        """``t^3 phi'(t)``; zero at ``t = 0``."""
        t = np.asarray(t, dtype=float)
        pos = t > 0
        ts = np.where(pos, t, 1.0)
        e1, _ = self.elasticities(ts)
        return np.where(pos, e1 * self.t2phi(ts), 0.0)

    def dtphi(self, t):
        """Derivative of ``t phi(t)``: ``phi + t phi'``."""
        t = np.asarray(t, dtype=float)
        e1, _ = self.elasticities(t)
        return self.phi(t) * (1 + e1)

    def index_ratio(self, t):
        """``(t phi)'' t / (t phi)'`` at ``t > 0``."""
        e1, e2 = self.elasticities(t)
        return (2 * e1 + e2) / (1 + e1)

    def Phi(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        c = self.scale
        if self.family == "power":
            return c * t ** self.p / self.p
        if self.family == "double_power":
            return c * (t ** self.p / self.p + t ** self.q / self.q)
        return self._Phi_tab(t)

    @cached_property
    def _Phi_knots(self):
        xk, yk, _, _, _, s0, _ = self._interp
        if 2 + s0 <= 0:
            raise HypothesisViolation("tabulated phi is not integrable at 0",
                                      inequality="lim t phi(t) = 0")
        head = np.exp(yk[0] + 2 * xk[0]) / (2 + s0)
        pieces = _gauss_log(lambda x: np.exp(self._logphi(x)[0] + 2 * x),
                            xk[:-1], xk[1:])
        return np.concatenate([[head], head + np.cumsum(pieces)])

    def _Phi_tab(self, t):
        xk, yk, _, _, _, s0, s1 = self._interp
        cum = self._Phi_knots
        out = np.zeros_like(t)
        pos = t > 0
        x = np.log(np.where(pos, t, 1.0))
        low = pos & (x < xk[0])
        high = pos & (x > xk[-1])
        mid = pos & ~low & ~high
        out[low] = np.exp(yk[0] + s0 * (x[low] - xk[0]) + 2 * x[low]) / (2 + s0)
        if high.any():
            g = 2 + s1
            out[high] = cum[-1] + np.exp(yk[-1] - s1 * xk[-1]) * (
                np.exp(g * x[high]) - np.exp(g * xk[-1])) / g
        if mid.any():
            k = np.clip(np.searchsorted(xk, x[mid], side="right") - 1, 0, len(xk) - 2)
            out[mid] = cum[k] + _gauss_log(
                lambda s: np.exp(self._logphi(s)[0] + 2 * s), xk[k], x[mid])
        if not np.all(np.isfinite(out)):
            raise NumericFailure("Phi quadrature produced non-finite values")
        return out

    def Phi_inv(self, s):
        """Inverse of ``Phi`` on ``[0, inf)``."""
        s = np.asarray(s, dtype=float)
        if self.family == "power":
            return (self.p * s / self.scale) ** (1.0 / self.p)
        out = np.zeros_like(s)
        pos = s > 0
        if pos.any():
            out[pos] = solve_increasing(self.Phi, self.tphi, s[pos],
                                        np.log(self.t_min), np.log(self.t_max))
        return out

    @cached_property
    def index_bounds(self):
        """``(ell, m)``: closed form for builtin families, grid inf/sup otherwise."""
        if self.family == "power":
            return self.p, self.p
        if self.family == "double_power":
            return min(self.p, self.q), max(self.p, self.q)
        r = self.index_ratio(self.grid)
        return 2 + float(np.min(r)), 2 + float(np.max(r))

    @cached_property
    def grid(self):
        return np.geomspace(self.t_min, self.t_max, self.samples)


def eval_Phi(spec: PhiSpec, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("Phi is evaluated at t >= 0")
    return spec.Phi(t)


@dataclass(frozen=True)
class ExponentData:
    ell: float
    m: float
    N: int
    ell_star: float
    m_star: float
    H_ok: bool

    @property
    def H_lower(self):
        return self.ell * (self.ell_star - self.m) / (self.ell_star - self.ell)


def critical_exponent(a, N):
    return a * N / (N - a) if a < N else float("inf")


def H_holds(ell, m, ell_star):
    if not np.isfinite(ell_star) or ell_star <= ell:
        return False
    low = ell * (ell_star - m) / (ell_star - ell)
    return bool(1 < low <= ell <= m < ell_star)


def extract_exponents(spec: PhiSpec, N: int) -> ExponentData:
    """Exponents ``ell <= m`` bounding the homogeneity index of ``t phi(t)``."""
    if N < 2:
        raise ValueError("analytic dimension N must be >= 2")
    ell, m = spec.index_bounds
    if ell <= 1:
        raise HypothesisViolation(f"ell = {ell:.6g} violates ell > 1", inequality="-1 < ell - 2")
    if m >= N:
        raise HypothesisViolation(f"m = {m:.6g} violates m < N = {N}", inequality="m - 2 < N - 2")
    ell_star = critical_exponent(ell, N)
    m_star = critical_exponent(m, N)
    return ExponentData(ell, m, int(N), ell_star, m_star, H_holds(ell, m, ell_star))


def conjugate_Phi(spec: PhiSpec, t):
    """Complementary N-function ``max_s (t s - Phi(s))``.

    The maximizer solves ``s phi(s) = t``; it is located by a bracketed
    solve over the sampling window of ``spec``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("conjugate is evaluated at t >= 0")
    out = np.zeros_like(t)
    pos = t > 0
    if not pos.any():
        return out
    lo_val, hi_val = spec.tphi(spec.t_min), spec.tphi(spec.t_max)
    tp = t[pos]
    if np.any(tp < lo_val) or np.any(tp > hi_val):
        raise NumericFailure(
            f"t outside the range [{lo_val:.3g}, {hi_val:.3g}] of s phi(s) on the window")
    s = solve_increasing(spec.tphi, spec.dtphi, tp, np.log(spec.t_min), np.log(spec.t_max))
    out[pos] = tp * s - spec.Phi(s)
    return out


class SobolevConjugate:
    """Sobolev conjugate ``Phi_*`` of ``Phi`` in analytic dimension ``N``.

    ``Phi_*`` is the inverse of ``H(y) = int_0^y Phi^{-1}(s) s^{-(N+1)/N} ds``.
    Substituting ``s = Phi(r)`` and ``r = e^x`` turns ``H`` into the integral
    of ``r^3 phi(r) / Phi(r)^(1 + 1/N)`` in ``x``, which is tabulated once by
    composite Gauss quadrature and continued by power laws at both ends.
    """

    def __init__(self, spec: PhiSpec, N: int, panel=0.25):
        ell, m = spec.index_bounds
        if ell >= N:
            raise HypothesisViolation(
                f"ell = {ell:.6g} >= N = {N}: Sobolev conjugate integral diverges",
                inequality="ell < N")
        self.spec, self.N = spec, N
        self.x_lo = np.log(spec.t_min) - 10.0
        self.x_hi = np.log(spec.t_max) + 10.0
        n = int(np.ceil((self.x_hi - self.x_lo) / panel))
        self.knots = np.linspace(self.x_lo, self.x_hi, n + 1)
        self.beta_lo = 1 - self._local_index(self.x_lo) / N
        self.beta_hi = 1 - self._local_index(self.x_hi) / N
        if self.beta_lo <= 0:
            raise HypothesisViolation("Sobolev conjugate integral diverges at 0",
                                      inequality="m < N")
        head = self._integrand(np.array(self.x_lo)) / self.beta_lo
        pieces = _gauss_log(self._integrand, self.knots[:-1], self.knots[1:])
        self.cum = np.concatenate([[head], head + np.cumsum(pieces)])

    def _local_index(self, x):
        r = np.exp(x)
        return float(self.spec.t2phi(r) / self.spec.Phi(r))

    def _integrand(self, x):
        r = np.exp(x)
        return r * self.spec.t2phi(r) / self.spec.Phi(r) ** (1 + 1 / self.N)

    def H_of_log(self, x):
        """``H(Phi(e^x))`` evaluated elementwise."""
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        low = x < self.x_lo
        high = x > self.x_hi
        mid = ~low & ~high
        out[low] = self.cum[0] * np.exp(self.beta_lo * (x[low] - self.x_lo))
        if high.any():
            k_hi = self._integrand(np.array(self.x_hi))
            out[high] = self.cum[-1] + k_hi * np.expm1(
                self.beta_hi * (x[high] - self.x_hi)) / self.beta_hi
        if mid.any():
            k = np.clip(np.searchsorted(self.knots, x[mid], side="right") - 1,
                        0, len(self.knots) - 2)
            out[mid] = self.cum[k] + _gauss_log(self._integrand, self.knots[k], x[mid])
        return out

    def _radius(self, t):
        t = np.asarray(t, dtype=float)
        return solve_increasing(lambda r: self.H_of_log(np.log(r)),
                                lambda r: self._integrand(np.log(r)) / r,
                                t, self.x_lo, self.x_hi)

    def __call__(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        out = np.zeros_like(t)
        pos = t > 0
        if pos.any():
            out[pos] = self.spec.Phi(self._radius(t[pos]))
        return out

    def index(self, t):
        """``t Phi_*'(t) / Phi_*(t)`` at ``t > 0``, from the inverse-function rule."""
        t = np.asarray(t, dtype=float)
        r = self._radius(t)
        return t * self.spec.Phi(r) ** (1 / self.N) / r


def sobolev_conjugate(spec: PhiSpec, t, N: int):
    return SobolevConjugate(spec, N)(t)


@dataclass
class HypothesisReport:
    phi1_ok: bool
    phi2_ok: bool
    phi3_ok: bool
    H_ok: bool
    convex_ok: bool
    ratio_inf: float
    ratio_sup: float
    ell: float
    m: float
    N: int
    ell_star: float
    messages: list = field(default_factory=list)

    @property
    def all_ok(self):
        return self.phi1_ok and self.phi2_ok and self.phi3_ok and self.H_ok and self.convex_ok

    def failed(self):
        names = {"phi1": self.phi1_ok, "phi2": self.phi2_ok, "phi3": self.phi3_ok,
                 "H": self.H_ok, "convexity": self.convex_ok}
        return [k for k, ok in names.items() if not ok]

    def as_dict(self):
        return {"phi1": self.phi1_ok, "phi2": self.phi2_ok, "phi3": self.phi3_ok,
                "H": self.H_ok, "convexity": self.convex_ok,
                "ratio_inf": self.ratio_inf, "ratio_sup": self.ratio_sup,
                "ell": self.ell, "m": self.m, "N": self.N, "ell_star": self.ell_star}


def check_hypotheses(spec: PhiSpec, N: int) -> HypothesisReport:
    """Evaluate the structural hypotheses on the sampling grid; never raises."""
    t = spec.grid
    msgs = []
    a = spec.tphi(t)
    ratio = spec.index_ratio(t)
    r_inf, r_sup = float(np.min(ratio)), float(np.max(ratio))
    ell, m = spec.index_bounds

    phi2 = bool(np.all(np.diff(a) > 0))
    if not phi2:
        msgs.append("t phi(t) is not strictly increasing on the sample grid")

    # power-law continuation past the window: t phi ~ t^(1 + e1)
    e1_lo, _ = spec.elasticities(np.array([spec.t_min]))
    e1_hi, _ = spec.elasticities(np.array([spec.t_max]))
    phi1 = bool(a[0] < spec.tphi(1.0) < a[-1] and 1 + e1_lo[0] > 0 and 1 + e1_hi[0] > 0)
    if not phi1:
        msgs.append("t phi(t) does not vanish at 0 / blow up at infinity")

    phi3 = bool(ell > 1 and m < N)
    if not phi3:
        msgs.append(f"index bounds ell={ell:.6g}, m={m:.6g} violate 1 < ell <= m < N={N}")

    ell_star = critical_exponent(ell, N)
    H = H_holds(ell, m, ell_star)
    if not H:
        low = ell * (ell_star - m) / (ell_star - ell) if np.isfinite(ell_star) else float("nan")
        msgs.append(f"(H) fails: ell(ell*-m)/(ell*-ell) = {low:.6g}, ell = {ell:.6g}, "
                    f"m = {m:.6g}, ell* = {ell_star:.6g}")

    convex = False
    if np.isfinite(ell_star) and m < ell_star:
        # Psi(t) = Phi(t) - t^2 phi(t) / ell*; Psi'' >= (t phi)' (1 - m / ell*)
        e1, e2 = spec.elasticities(t)
        ph = spec.phi(t)
        da = ph * (1 + e1)
        d2a_t = ph * (2 * e1 + e2)
        psi2 = da - (2 * da + d2a_t) / ell_star
        bound = da * (1 - m / ell_star)
        convex = bool(np.all(psi2 >= bound * (1 - 1e-9) - 1e-300))
    if not convex:
        msgs.append("Phi(t) - t^2 phi(t)/ell* is not convex on the grid")

    return HypothesisReport(phi1, phi2, phi3, H, convex, r_inf, r_sup,
                            ell, m, int(N), ell_star, msgs)


def zeta(t, lo, hi):
    """``(min(t^lo, t^hi), max(t^lo, t^hi))``."""
    t = np.asarray(t, dtype=float)
    a, b = t ** lo, t ** hi
    return np.minimum(a, b), np.maximum(a, b)
