import numpy as np
import pytest

from phinehari.constants import smooth_field
from phinehari.errors import NoSolutionFound, ProjectionUnavailable
from phinehari.fibering import Ray, classify
from phinehari.functional import ProblemData, energy, psi
from phinehari.mesh import Mesh, ScalarField, gradient, luxemburg_norm
from phinehari.orlicz import PhiSpec, extract_exponents
from phinehari.solver import (Iterate, minimize_branch, monitor_bounds, nehari_class,
                              norm_bounds, project_to_branch, project_with_t)

from conftest import bump


@pytest.fixture(scope="module")
def solved(reference):
    data, _ = reference
    return {b: minimize_branch(data, b, starts=8, seed=42) for b in ("plus", "minus")}


def test_projection_lands_on_each_branch(reference, rng):
    data, _ = reference
    u = smooth_field(data.mesh, rng, positive=True)
    wp, tp = project_with_t(u, data, "plus")
    wm, tm = project_with_t(u, data, "minus")
    assert 0 < tp < tm
    for w, cls in ((wp, "plus"), (wm, "minus")):
        assert abs(psi(w, data)) <= 1e-8 * Ray(w, data).scale
        assert classify(w, data) == cls
    # the projection only depends on the ray
    assert np.allclose(project_to_branch(u * 3.0, data, "plus").values, wp.values,
                       rtol=1e-9, atol=1e-14)


def test_projection_errors(reference):
    data, _ = reference
    u = bump(data.mesh)
    with pytest.raises(ProjectionUnavailable):
        project_with_t(-u, data, "plus")
    with pytest.raises(ValueError):
        project_with_t(u, data, "sideways")
    huge = data.with_f(data.f * 1e6)
    with pytest.raises(ProjectionUnavailable):
        project_with_t(u, huge, "minus")


def test_reference_results_converge(solved, reference):
    data, rep = reference
    plus, minus = solved["plus"], solved["minus"]
    assert plus.converged and minus.converged
    assert plus.residual_rel <= 1e-6 and minus.residual_rel <= 1e-6
    assert plus.J_value < 0 < rep.delta1 <= minus.J_value
    assert plus.u.values.min() >= 0 and minus.u.values.min() >= 0
    for res in (plus, minus):
        assert abs(res.psi_value) <= 1e-8 * res.scale
        assert classify(res.u, data) == res.branch


def test_history_is_monotone_and_stays_on_branch(solved):
    for res in solved.values():
        J = [it.J for it in res.history]
        assert np.all(np.diff(J) <= 1e-12 * (np.abs(J[1:]) + 1))
        for it in res.history:
            assert it.cls == res.branch
            assert abs(it.psi) <= 1e-8 * (abs(it.J) + 10 * it.norm ** 2 + 1)


def test_result_beats_every_sampled_start(solved):
    for res in solved.values():
        assert res.J_value <= min(res.sampled_J) + 1e-10 * abs(res.J_value)


def test_result_record_fields(solved):
    rec = solved["minus"].record()
    assert rec["branch"] == "minus" and rec["converged"]
    assert rec["min_node"] >= 0 and rec["start_index"] in range(8)


def test_zero_source_has_only_minus_branch(reference):
    data, rep = reference
    zero = data.with_f(ScalarField.zeros(data.mesh))
    with pytest.raises(ProjectionUnavailable):
        minimize_branch(zero, "plus", starts=2)
    res = minimize_branch(zero, "minus", starts=2, seed=1)
    assert res.converged and res.J_value > 0
    assert nehari_class(res.u, zero) == "minus"


def test_deterministic_and_thread_invariant(reference):
    data, _ = reference
    a = minimize_branch(data, "minus", starts=4, seed=7)
    b = minimize_branch(data, "minus", starts=4, seed=7)
    c = minimize_branch(data, "minus", starts=4, seed=7, workers=2)
    assert np.array_equal(a.u.values, b.u.values) and np.array_equal(a.u.values, c.u.values)
    assert a.J_value == b.J_value == c.J_value and a.start_index == c.start_index


def test_no_solution_when_every_ray_misses(reference):
    data, _ = reference
    huge = data.with_f(data.f * 1e6)
    with pytest.raises(NoSolutionFound):
        minimize_branch(huge, "plus", starts=2)


def test_raw_residual_metric_runs(reference):
    data, _ = reference
    res = minimize_branch(data, "plus", starts=1, budget=200, seed=3, metric="l2")
    assert np.isfinite(res.J_value) and res.J_value < 0
    with pytest.raises(ValueError):
        minimize_branch(data, "plus", metric="h2")


def test_two_dimensional_problem():
    spec = PhiSpec.double_power(2.0, 2.5)
    ex = extract_exponents(spec, 4)
    mesh = Mesh.rectangle(16, 16)
    f = ScalarField.from_function(mesh, lambda x, y: 0.3 * np.sin(np.pi * x) * np.sin(np.pi * y))
    data = ProblemData(spec, ex, f, 4.5)
    res = minimize_branch(data, "minus", starts=2, seed=0)
    assert res.converged and classify(res.u, data) == "minus"


def test_monitors_on_reference_plus(solved, reference):
    data, rep = reference
    flags = monitor_bounds(solved["plus"].history, rep, data.exponents)
    assert flags.applicable and flags.upper_ok and flags.lower_ok
    assert flags.tail_start < len(solved["plus"].history)


def test_monitor_flags_artificial_collapse(reference):
    data, rep = reference
    hist = [Iterate(-0.05, 0.0, 0.0, "plus", 0.0) for _ in range(10)]
    flags = monitor_bounds(hist, rep, data.exponents, alpha_plus=-0.05)
    assert flags.applicable and not flags.lower_ok and flags.upper_ok
    assert flags.lower_violations == list(range(10))


def test_monitor_not_applicable(reference):
    data, rep = reference
    hist = [Iterate(1.0, 1.0, 0.0, "minus", 0.0)]
    assert not monitor_bounds(hist, rep, data.exponents).applicable
    assert not monitor_bounds(hist, rep, data.exponents, f_norm=0.0,
                              alpha_plus=-1.0).applicable
    assert not monitor_bounds([], rep, data.exponents).applicable


def test_norm_bounds_switch_exponent(reference):
    data, rep = reference
    ex = extract_exponents(PhiSpec.double_power(2.0, 2.5), 4)
    up_small, low = norm_bounds(0.5, rep, ex, 0.5, -0.1)
    up_big, low2 = norm_bounds(2.0, rep, ex, 0.5, -0.1)
    c = 0.5 * rep.S ** -0.5
    k = (rep.q - 1) / (rep.q - ex.m) * c
    assert up_small == pytest.approx(k ** (1 / (ex.m - 1)), rel=1e-14)
    assert up_big == pytest.approx(k ** (1 / (ex.ell - 1)), rel=1e-14)
    assert low == low2 == pytest.approx(0.1 * rep.q / ((rep.q - 1) * c), rel=1e-14)


def test_plus_norm_inside_window(solved, reference):
    data, rep = reference
    u = solved["plus"].u
    n = luxemburg_norm(gradient(u), data.spec)
    up, low = norm_bounds(n, rep, data.exponents, rep.f_norm, energy(u, data))
    assert low * 0.95 <= n <= up * 1.05
