"""Property suites over sampled inputs.

Every suite returns a :class:`SuiteResult` with the number of checks made
and the number that failed. Suites downstream of the monotonicity of
``t phi(t)`` are skipped when it fails, since nothing after it is defined.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import (build_report, check_f_conditions, delta1_bound, estimate_S,
                        lambda1, sample_directions, smooth_field)
from .errors import PhiNehariError
from .fibering import DEAD_BAND, Ray, profile_of
from .functional import ProblemData, energy, pairing, psi_prime_pair, residual
from .mesh import (GradientField, Mesh, ScalarField, gradient, lp_norm, luxemburg_norm,
                   modular)
from .orlicz import (PhiSpec, SobolevConjugate, check_hypotheses, conjugate_Phi,
                     extract_exponents, zeta)

SLACK = 1e-8


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checks: int = 0
    violations: int = 0
    skipped: bool = False
    detail: str = ""
    worst: float = 0.0

    def record(self):
        return {"suite": self.name, "passed": self.passed, "skipped": self.skipped,
                "checks": self.checks, "violations": self.violations,
                "worst": self.worst, "detail": self.detail}


def _suite(name, ok_mask, excess=None, detail=""):
    ok_mask = np.asarray(ok_mask, dtype=bool).ravel()
    bad = int(np.count_nonzero(~ok_mask))
    worst = float(np.max(excess)) if excess is not None and np.size(excess) else 0.0
    return SuiteResult(name, bad == 0, int(ok_mask.size), bad, detail=detail, worst=worst)


def _within(lo, val, hi, slack=SLACK):
    """Elementwise ``lo <= val <= hi`` up to relative slack, plus the worst excess."""
    scale = np.maximum(np.abs(val), 1e-300)
    ex = np.maximum((lo - val) / scale, (val - hi) / scale)
    return ex <= slack, ex


def log_uniform(rng, n, lo=1e-3, hi=1e3):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), n))


# ---- pointwise N-function suites -----------------------------------------

def sandwich_Phi(spec, rng, n=10_000):
    ell, m = spec.index_bounds
    rho, t = log_uniform(rng, n), log_uniform(rng, n)
    z0, z1 = zeta(t, ell, m)
    base = spec.Phi(rho)
    ok, ex = _within(z0 * base, spec.Phi(rho * t), z1 * base)
    return _suite("sandwich_Phi", ok, ex)


def sandwich_phi(spec, rng, n=10_000):
    ell, m = spec.index_bounds
    rho, t = log_uniform(rng, n), log_uniform(rng, n)
    e0, e1 = zeta(t, ell - 2, m - 2)
    base = spec.phi(rho)
    ok, ex = _within(e0 * base, spec.phi(rho * t), e1 * base)
    return _suite("sandwich_phi", ok, ex)


def sandwich_Phi_star(spec, N, rng, n=10_000):
    ell, m = spec.index_bounds
    if m >= N:
        return SuiteResult("sandwich_Phi_star", True, skipped=True, detail="requires m < N")
    ls, ms = ell * N / (N - ell), m * N / (N - m)
    S = SobolevConjugate(spec, N)
    rho, t = log_uniform(rng, n), log_uniform(rng, n)
    z0, z1 = zeta(t, ls, ms)
    base = S(rho)
    ok1, ex1 = _within(z0 * base, S(rho * t), z1 * base)
    idx = S.index(log_uniform(rng, n))
    ok2, ex2 = _within(ls, idx, ms)
    return _suite("sandwich_Phi_star", np.concatenate([ok1, ok2]), np.concatenate([ex1, ex2]))


def ratio_bound(spec, rng, n=10_000):
    """``ell - 2 <= t phi'(t) / phi(t) <= m - 2``."""
    ell, m = spec.index_bounds
    t = log_uniform(rng, n, spec.t_min, spec.t_max)
    e1, _ = spec.elasticities(t)
    ok = (e1 >= ell - 2 - SLACK * max(1, abs(ell - 2))) & (e1 <= m - 2 + SLACK * max(1, abs(m - 2)))
    return _suite("ratio_bound", ok, np.maximum(ell - 2 - e1, e1 - (m - 2)))


def index_Phi(spec, rng, n=10_000):
    """``ell Phi(t) <= t^2 phi(t) <= m Phi(t)``."""
    ell, m = spec.index_bounds
    t = log_uniform(rng, n)
    P = spec.Phi(t)
    ok, ex = _within(ell * P, spec.t2phi(t), m * P)
    return _suite("index_Phi", ok, ex)


def convexity(spec, N, rng, n=2_000):
    """Second differences of ``Phi - t^2 phi / ell*`` on a log grid are nonnegative."""
    ell, m = spec.index_bounds
    if ell >= N:
        return SuiteResult("convexity", True, skipped=True, detail="requires ell < N")
    ls = ell * N / (N - ell)
    if m >= ls:
        return SuiteResult("convexity", False, detail="m >= ell*")
    centres = log_uniform(rng, n)
    h = 1e-3 * centres
    psi = lambda t: spec.Phi(t) - spec.t2phi(t) / ls
    d2 = psi(centres + h) - 2 * psi(centres) + psi(centres - h)
    noise = 1e-13 * (spec.Phi(centres + h) + spec.t2phi(centres + h))
    return _suite("convexity", d2 >= -noise, -d2 / np.maximum(noise, 1e-300))


def conjugate_inequality(spec, rng, n=10_000):
    """``Phi~(t phi(t)) <= Phi(2t) <= 2^m Phi(t)``."""
    _, m = spec.index_bounds
    t = log_uniform(rng, n)
    a = conjugate_Phi(spec, spec.tphi(t))
    b = spec.Phi(2 * t)
    c = 2 ** m * spec.Phi(t)
    ok1, ex1 = _within(0, a, b)
    ok2, ex2 = _within(0, b, c)
    return _suite("conjugate_inequality", np.concatenate([ok1, ok2]),
                  np.concatenate([ex1, ex2]))


# ---- mesh suites ----------------------------------------------------------

def _random_fields(mesh, rng, count):
    out = []
    for k in range(count):
        u = smooth_field(mesh, rng, positive=(k % 3 == 0))
        out.append(u * float(np.exp(rng.uniform(-3, 3)) / max(np.abs(u.values).max(), 1e-300)))
    return out


def modular_sandwich(spec, mesh, rng, count=200):
    ell, m = spec.index_bounds
    oks, exs = [], []
    for u in _random_fields(mesh, rng, count):
        g = gradient(u)
        nrm = luxemburg_norm(g, spec)
        z0, z1 = zeta(nrm, ell, m)
        ok, ex = _within(z0, modular(g, spec), z1, slack=1e-8)
        oks.append(ok)
        exs.append(ex)
    return _suite("modular_sandwich", oks, exs)


def norm_axioms(spec, mesh, rng, count=100):
    oks, exs = [], []
    fields = _random_fields(mesh, rng, 2 * count)
    for u, v in zip(fields[::2], fields[1::2]):
        gu, gv = gradient(u), gradient(v)
        nu, nv = luxemburg_norm(gu, spec), luxemburg_norm(gv, spec)
        nw = luxemburg_norm(GradientField(mesh, gu.components + gv.components), spec)
        c = float(np.exp(rng.uniform(-2, 2)))
        nc = luxemburg_norm(GradientField(mesh, c * gu.components), spec)
        ex_tri = (nw - nu - nv) / (nu + nv)
        ex_hom = abs(nc - c * nu) / (c * nu)
        oks += [ex_tri <= 1e-8, ex_hom <= 1e-8]
        exs += [ex_tri, ex_hom]
    return _suite("norm_axioms", oks, exs)


def gradient_consistency(data, rng, count=50, tol=1e-5):
    """Residual pairing against central differences of the energy."""
    mesh = data.mesh
    oks, errs = [], []
    for _ in range(count):
        u = smooth_field(mesh, rng)
        v = smooth_field(mesh, rng)
        u = u * (float(rng.uniform(0.2, 2)) / max(np.abs(u.values).max(), 1e-300))
        v = v * (1 / max(np.abs(v.values).max(), 1e-300))
        exact = pairing(residual(u, data), v)
        h = 1e-5
        fd = (energy(u + v * h, data) - energy(u - v * h, data)) / (2 * h)
        err = abs(fd - exact) / max(abs(exact), abs(fd), 1e-12)
        oks.append(err < tol)
        errs.append(err)
    return _suite("gradient_consistency", oks, errs)


def fibering_identities(data, rng, count=20):
    """``m_u = gamma' + int f u`` and ``<psi'(tu), tu> = t^2 m_u'(t)`` on the Nehari set."""
    mesh = data.mesh
    oks, exs = [], []
    for u in _random_fields(mesh, rng, count):
        ray = Ray(u, data)
        for t in log_uniform(rng, 4, 0.1, 10):
            # gamma'(t) assembled independently as <J'(tu), u>
            gp = pairing(residual(u * t, data), u)
            # scale: the magnitudes of the terms summed at this t
            rt = Ray(u * t, data)
            scale = (rt.A + rt.B) / t + abs(ray.F)
            ex = abs(ray.m(t) - gp - ray.F) / scale
            oks.append(ex <= 1e-10)
            exs.append(ex / 1e-10)
        # put t u on the Nehari set by choosing the source: F = m_u(t)
        t = float(log_uniform(rng, 1, 0.2, 5)[0])
        shape = data.f if np.any(data.f.values) else smooth_field(mesh, rng, positive=True)
        f0 = float(np.sum(shape.cell_average() * u.cell_average()) * mesh.cell_volume)
        if abs(f0) < 1e-14:
            continue
        d2 = data.with_f(shape * (ray.m(t) / f0))
        r2 = Ray(u, d2)
        lhs = psi_prime_pair(u * t, d2)
        rhs = t * t * r2.m_prime(t)
        ex = abs(lhs - rhs) / max(abs(rhs), 1e-300)
        oks.append(ex <= 1e-5)
        exs.append(ex / 1e-5)
    return _suite("fibering_identities", oks, exs)


def threshold_geometry(data, report, directions):
    """No zero-class Nehari point and ``max m_u >= int f u`` when ``||f|| < lambda_1``."""
    if report.f_norm >= report.lambda1:
        return SuiteResult("threshold_geometry", True, skipped=True,
                           detail="||f|| >= lambda1: no claim to check")
    oks, zero_hits = [], 0
    for u in directions:
        prof = profile_of(Ray(u, data))
        oks.append(not prof.threshold_violated)
        for t in prof.roots:
            val = psi_prime_pair(u * t, data)
            A = Ray(u * t, data).A
            zero = abs(val) <= DEAD_BAND * abs(A)
            zero_hits += zero
            oks.append(not zero)
    return _suite("threshold_geometry", oks, detail=f"zero-class hits: {zero_hits}")


def n0_exclusion(data, report, directions):
    """Any numerical zero-class point forces ``||f||`` above a lambda_1 branch value."""
    lam, branches = lambda1(report.S, data.exponents, report.q)
    oks = []
    for u in directions:
        prof = profile_of(Ray(u, data))
        for t in prof.roots:
            val = psi_prime_pair(u * t, data)
            if abs(val) <= DEAD_BAND * abs(Ray(u * t, data).A):
                oks.append(report.f_norm >= min(branches.values()) * (1 - 1e-6))
            else:
                oks.append(True)
    return _suite("n0_exclusion", oks)


def delta1_witness(data, report, directions):
    if not report.f_norm < report.lambda2:
        return SuiteResult("delta1_witness", True, skipped=True, detail="||f|| >= lambda2")
    d1 = delta1_bound(report.S, data.exponents, report.f_norm, report.q)
    if d1 is None:
        return SuiteResult("delta1_witness", False, detail="lower bound not positive")
    vals = []
    for u in directions:
        prof = profile_of(Ray(u, data))
        if "minus" in prof.classes:
            vals.append(energy(u * prof.roots[-1], data))
    vals = np.array(vals)
    res = _suite("delta1_witness", vals >= d1 * (1 - 1e-9), d1 - vals)
    res.detail = f"delta1 = {d1:.6g}, min J on minus = {vals.min():.6g}" if vals.size else ""
    return res


def alpha_plus_witness(data, report, directions):
    if not data.exponents.H_ok:
        return SuiteResult("alpha_plus_witness", True, skipped=True, detail="(H) fails")
    vals = []
    for u in directions:
        ray = Ray(u, data)
        if ray.F <= 0:
            u = -u
        prof = profile_of(Ray(u, data))
        if "plus" in prof.classes:
            vals.append(energy(u * prof.roots[0], data))
    if not vals:
        return SuiteResult("alpha_plus_witness", True, skipped=True, detail="f = 0")
    vals = np.array(vals)
    return _suite("alpha_plus_witness", vals < 0, vals)


POINTWISE = ("sandwich_Phi", "sandwich_phi", "sandwich_Phi_star", "ratio_bound",
             "index_Phi", "convexity", "conjugate_inequality")
MESHWISE = ("modular_sandwich", "norm_axioms", "gradient_consistency",
            "fibering_identities", "threshold_geometry", "n0_exclusion",
            "delta1_witness", "alpha_plus_witness")


@dataclass
class VerifyReport:
    suites: list = field(default_factory=list)

    @property
    def passed(self):
        return all(s.passed for s in self.suites)

    def table(self):
        w = max(len(s.name) for s in self.suites)
        lines = []
        for s in self.suites:
            state = "skip" if s.skipped else ("pass" if s.passed else "FAIL")
            lines.append(f"{s.name:<{w}}  {state:4}  {s.checks:6d} checks  "
                         f"{s.violations:4d} violations  {s.detail}".rstrip())
        return "\n".join(lines)


def _skip_all(names, why):
    return [SuiteResult(n, True, skipped=True, detail=why) for n in names]


def run_suites(spec: PhiSpec, N: int, mesh: Mesh, q=None, f: ScalarField | None = None,
               seed=0, samples=10_000, directions=100, target_fraction=0.5,
               f_shape: ScalarField | None = None) -> VerifyReport:
    """Run every suite for ``spec`` on ``mesh``; all randomness comes from ``seed``."""
    rng = np.random.default_rng(seed)
    rep = VerifyReport()
    hyp = check_hypotheses(spec, N)
    for name, ok in (("phi2", hyp.phi2_ok), ("phi1", hyp.phi1_ok), ("phi3", hyp.phi3_ok),
                     ("H", hyp.H_ok)):
        rep.suites.append(SuiteResult(name, ok, 1, int(not ok)))
    if not hyp.phi2_ok:
        rep.suites += _skip_all(POINTWISE + MESHWISE, "skipped: phi2 fails")
        return rep
    rep.suites += [sandwich_Phi(spec, rng, samples), sandwich_phi(spec, rng, samples)]
    try:
        rep.suites.append(sandwich_Phi_star(spec, N, rng, samples))
    except PhiNehariError as exc:
        rep.suites.append(SuiteResult("sandwich_Phi_star", False, detail=str(exc)))
    rep.suites += [ratio_bound(spec, rng, samples), index_Phi(spec, rng, samples),
                   convexity(spec, N, rng), conjugate_inequality(spec, rng, samples)]
    try:
        ex = extract_exponents(spec, N)
    except PhiNehariError as exc:
        rep.suites += _skip_all(MESHWISE, f"skipped: {exc}")
        return rep
    rep.suites += [modular_sandwich(spec, mesh, rng), norm_axioms(spec, mesh, rng)]
    qq = ex.ell_star if q is None else float(q)
    est = estimate_S(mesh, spec, ex, q=qq, seed=seed)
    report = build_report(est.S, ex, qq, mesh)
    if f is None:
        shape = f_shape
        if shape is None or shape.is_zero():
            shape = smooth_field(mesh, np.random.default_rng([seed, 1]), positive=True)
        f = shape * (target_fraction * report.Lambda / lp_norm(shape, qq / (qq - 1)))
    data = ProblemData(spec, ex, f, qq)
    dirs = sample_directions(mesh, directions, rng, qq)
    check_f_conditions(f, report, data, [])
    rep.suites += [gradient_consistency(data, rng), fibering_identities(data, rng),
                   threshold_geometry(data, report, dirs), n0_exclusion(data, report, dirs),
                   delta1_witness(data, report, dirs), alpha_plus_witness(data, report, dirs)]
    return rep
