import numpy as np
import pytest

from phinehari.constants import smooth_field
from phinehari.errors import DimensionMismatch
from phinehari.fibering import Ray, nehari_roots
from phinehari.functional import (ProblemData, dual_norm, energy, evaluate, pairing, psi,
                                  psi_prime_pair, reduced_forms, residual)
from phinehari.mesh import Mesh, ScalarField, gradient, lp_norm, luxemburg_norm
from phinehari.orlicz import PhiSpec, extract_exponents

from conftest import bump, sine


def laplace_data(mesh, f=None, q=4.0):
    spec = PhiSpec.power(2.0)
    return ProblemData(spec, extract_exponents(spec, 4), f or ScalarField.zeros(mesh), q)


def test_energy_of_zero_and_sine():
    mesh = Mesh.interval(512)
    data = laplace_data(mesh)
    assert energy(ScalarField.zeros(mesh), data) == 0.0
    u = sine(mesh)
    assert energy(u, data) == pytest.approx(np.pi ** 2 / 4 - 3 / 32, abs=1e-4)
    one = ScalarField(mesh, np.ones(513))
    drop = energy(u, data) - energy(u, data.with_f(one))
    assert drop == pytest.approx(2 / np.pi, abs=1e-4)


def test_mesh_mismatch_rejected():
    data = laplace_data(Mesh.interval(16))
    with pytest.raises(DimensionMismatch):
        energy(ScalarField.zeros(Mesh.interval(8)), data)


def test_zero_residual_at_zero():
    mesh = Mesh.rectangle(6, 5)
    r = residual(ScalarField.zeros(mesh), laplace_data(mesh))
    assert r.shape == (mesh.n_interior,) and not np.any(r)


@pytest.mark.parametrize("spec", [PhiSpec.power(1.5), PhiSpec.power(2.0), PhiSpec.power(3.0),
                                  PhiSpec.double_power(2, 2.5)], ids=lambda s: str(s.describe()))
def test_residual_matches_central_differences(spec, rng):
    mesh = Mesh.rectangle(12, 10, 1.0, 0.8)
    ex = extract_exponents(spec, 4)
    data = ProblemData(spec, ex, smooth_field(mesh, rng) * 3.0)
    for _ in range(10):
        u, v = smooth_field(mesh, rng) * 2.0, smooth_field(mesh, rng)
        eps = 1e-6
        fd = (energy(u + v * eps, data) - energy(u - v * eps, data)) / (2 * eps)
        assert pairing(residual(u, data), v) == pytest.approx(fd, rel=1e-5)


def test_manufactured_solution_second_order():
    # u0 = sin(pi x) solves -u'' = u^3 + f for f = pi^2 sin - sin^3
    def defect(n):
        mesh = Mesh.interval(n)
        u0 = sine(mesh)
        f = ScalarField.from_function(mesh, lambda x: np.pi ** 2 * np.sin(np.pi * x)
                                      - np.sin(np.pi * x) ** 3)
        return dual_norm(residual(u0, laplace_data(mesh, f)), mesh)

    d1, d2 = defect(64), defect(128)
    assert d1 < 1e-3
    assert d1 / d2 == pytest.approx(4, rel=0.1)


def test_psi_is_pairing_with_u(reference, rng):
    data, _ = reference
    for _ in range(5):
        u = smooth_field(data.mesh, rng)
        ev = evaluate(u, data)
        assert ev.psi == pytest.approx(pairing(ev.residual, u), rel=1e-12, abs=1e-14)
        assert psi(u, data) == pytest.approx(Ray(u, data).gamma_prime(1.0), rel=1e-12)


def test_zero_field_pairs_vanish(reference):
    data, _ = reference
    z = ScalarField.zeros(data.mesh)
    assert psi(z, data) == 0 and psi_prime_pair(z, data) == 0


def _projected(data, rng, count=6):
    out = []
    while len(out) < count:
        u = smooth_field(data.mesh, rng, positive=True)
        prof = nehari_roots(u, data)
        out += [u * t for t in prof.roots]
    return out


def test_reduced_forms_on_nehari_set(reference, rng):
    data, _ = reference
    for w in _projected(data, rng):
        scale = Ray(w, data).scale
        J_a, J_b, P_a, P_b = reduced_forms(w, data)
        J, P = energy(w, data), psi_prime_pair(w, data)
        for val, ref in ((J_a, J), (J_b, J), (P_a, P), (P_b, P)):
            assert abs(val - ref) <= 1e-8 * scale


def test_reduced_forms_differ_off_the_set(reference, rng):
    data, _ = reference
    w = smooth_field(data.mesh, rng, positive=True) * 0.37
    J_a, J_b, _, _ = reduced_forms(w, data)
    assert abs(J_a - energy(w, data)) > 1e-6


def test_psi_prime_identity_with_difference_quotient(reference, rng):
    data, _ = reference
    for w in _projected(data, rng):
        ray = Ray(w, data)
        h = 1e-5
        dm = (ray.m(1 + h) - ray.m(1 - h)) / (2 * h)
        assert psi_prime_pair(w, data) == pytest.approx(dm, rel=1e-5)


def test_coercivity_witness(reference, rng):
    data, rep = reference
    ex, q, S = data.exponents, data.q, rep.S
    for w in _projected(data, rng, 12):
        n = luxemburg_norm(gradient(w), data.spec)
        bound = (ex.ell * (1 / ex.m - 1 / q) * min(n ** ex.ell, n ** ex.m)
                 - (1 - 1 / q) * S ** (-1 / ex.ell) * rep.f_norm * n)
        assert energy(w, data) >= bound - 1e-10


def test_discrete_embedding_inequality(reference, rng):
    # ||u||_q <= S^{-1/ell} ||grad u||_Phi holds for every discrete field
    data, rep = reference
    for _ in range(20):
        u = smooth_field(data.mesh, rng)
        assert lp_norm(u, 4) <= rep.S ** -0.5 * luxemburg_norm(gradient(u), data.spec) * (1 + 1e-9)
