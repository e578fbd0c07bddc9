import warnings

import numpy as np
import pytest
import scipy.linalg as sla

from phinehari.constants import (ThresholdWarning, auto_scale_f, build_report,
                                 check_f_conditions, delta1_bound, direction_case,
                                 estimate_S, lambda1, sample_directions)
from phinehari.errors import DegenerateInput
from phinehari.fibering import Ray
from phinehari.mesh import Mesh, ScalarField, interior_operators, lp_norm, stiffness
from phinehari.orlicz import PhiSpec, extract_exponents

from conftest import bump, sine

EX2 = extract_exponents(PhiSpec.power(2.0), 4)


def test_lambda1_unit_S():
    # ell = m = 2, q = 4: sqrt(2/3) * 4/3
    lam, branches = lambda1(1.0, EX2, 4.0)
    assert lam == pytest.approx(np.sqrt(2 / 3) * 4 / 3, rel=1e-14)
    assert lam == pytest.approx(1.0887, abs=1e-4)
    assert branches["ell"] == pytest.approx(branches["m"], rel=1e-14)


def test_lambda1_monotone_in_S():
    ex = extract_exponents(PhiSpec.double_power(2, 2.5), 4)
    vals = [lambda1(S, ex, 4.5)[0] for S in np.geomspace(0.1, 100, 30)]
    assert np.all(np.diff(vals) > 0)


def test_delta1_closed_form():
    # S = 1, f = 0: radius sqrt(2/3), bound R^2 * 2 * (1/2 - 1/4) = 1/3
    assert delta1_bound(1.0, EX2, 0.0, 4.0) == pytest.approx(1 / 3, rel=1e-14)
    assert delta1_bound(1.0, EX2, 1e3, 4.0) is None


def test_report_invariants():
    ex = extract_exponents(PhiSpec.double_power(2, 2.5), 4)
    rep = build_report(3.7, ex, 4.5)
    cap = (4.5 - ex.m) / (ex.m - 1)
    assert rep.lambda2 == pytest.approx(rep.lambda1 / ex.m, rel=1e-14)
    assert rep.Lambda1 == min(rep.lambda1, cap) and rep.Lambda2 == min(rep.lambda2, cap)
    assert rep.Lambda == min(rep.Lambda1, rep.Lambda2) <= rep.lambda1
    d = rep.as_dict()
    assert set(d) >= {"S", "lambda1", "lambda2", "Lambda"}
    assert "lambda1 = " in rep.to_kv()


def _discrete_eigenvalue(mesh):
    G, Av = interior_operators(mesh)
    K = stiffness(mesh).toarray()
    M = (Av.T @ Av).toarray() * mesh.cell_volume
    return sla.eigh(K, M, eigvals_only=True, subset_by_index=[0, 0])[0]


def test_S_is_rayleigh_quotient_for_quadratic_Phi():
    # Phi = t^2 makes the Luxemburg norm the L^2 norm, so with q = 2 the
    # minimal quotient is the smallest generalized eigenvalue of (K, M)
    spec = PhiSpec.power(2.0, scale=2.0)
    ex = extract_exponents(spec, 4)
    mesh = Mesh.interval(64)
    est = estimate_S(mesh, spec, ex, q=2.0, starts=2, seed=3)
    oracle = _discrete_eigenvalue(mesh)
    h = 1 / 64
    assert oracle == pytest.approx((2 / h * np.tan(np.pi * h / 2)) ** 2, rel=1e-8)
    assert est.S == pytest.approx(oracle, rel=1e-7)
    assert est.spread < 1e-6


def test_S_decreases_toward_pi_squared_under_refinement():
    spec = PhiSpec.power(2.0, scale=2.0)
    ex = extract_exponents(spec, 4)
    vals = [estimate_S(Mesh.interval(n), spec, ex, q=2.0, starts=2).S for n in (16, 32, 64)]
    assert vals[0] > vals[1] > vals[2] > np.pi ** 2


def test_S_invariant_under_mesh_scaling_for_critical_exponent():
    # with ell = 2, q = ell* = 4 in dimension N = 4 the quotient is dilation
    # invariant only in 4D; in 1D stretching by L scales it by L^(-3/2)
    spec = PhiSpec.power(2.0)
    s1 = estimate_S(Mesh.interval(32), spec, EX2, q=4.0, starts=2).S
    s2 = estimate_S(Mesh.interval(32, 2.0), spec, EX2, q=4.0, starts=2).S
    assert s2 == pytest.approx(s1 * 2.0 ** -1.5, rel=1e-6)


def test_f_conditions_zero_and_below(reference, rng):
    data, rep = reference
    dirs = sample_directions(data.mesh, 10, rng, data.q)
    zero = ScalarField.zeros(data.mesh)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        r0 = check_f_conditions(zero, build_report(rep.S, data.exponents, data.q),
                                data.with_f(zero), dirs)
        f = auto_scale_f(bump(data.mesh), 0.99, rep)
        r1 = check_f_conditions(f, build_report(rep.S, data.exponents, data.q),
                                data.with_f(f), dirs)
    assert r0.f_norm == 0 and r0.f1_ok and r0.f2_ok and r0.f2p_ok
    assert r0.delta1 is not None and r0.delta1 > 0
    assert r1.f_norm == pytest.approx(0.99 * rep.Lambda, rel=1e-12)
    assert r1.f1_ok and r1.f2_ok and r1.f2p_ok
    assert sum(r1.case_tallies.values()) == len(dirs)


def test_f_conditions_above_lambda1_warns(reference, rng):
    data, rep = reference
    shape = sine(data.mesh)
    f = shape * (1.01 * rep.lambda1 / lp_norm(shape, 4 / 3))
    dirs = sample_directions(data.mesh, 10, rng, data.q)
    with pytest.warns(ThresholdWarning):
        r = check_f_conditions(f, build_report(rep.S, data.exponents, data.q),
                               data.with_f(f), dirs)
    assert not r.f1_ok and sum(r.case_failures.values()) > 0


def test_direction_cases(reference):
    data, _ = reference
    u = bump(data.mesh)
    # for ell = m every direction is case i or iii depending on its size
    t = Ray(u, data)
    tbar = ((EX2.ell - 1) * t.A / ((data.q - 1) * t.B)) ** (1 / (data.q - EX2.ell))
    assert direction_case(Ray(u * (0.5 * tbar), data), EX2) == "i"
    assert direction_case(Ray(u * (2 * tbar), data), EX2) == "iii"


def test_auto_scale_f(reference):
    data, rep = reference
    f = auto_scale_f(bump(data.mesh), 0.3, rep)
    assert lp_norm(f, 4 / 3) == pytest.approx(0.3 * rep.Lambda, rel=1e-12)
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            auto_scale_f(bump(data.mesh), bad, rep)
    with pytest.raises(DegenerateInput):
        auto_scale_f(sine(data.mesh, 2), 0.5, rep)
    with pytest.raises(DegenerateInput):
        auto_scale_f(ScalarField.zeros(data.mesh), 0.5, rep)
