import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phinehari.errors import DimensionMismatch, FieldFormatError
from phinehari.mesh import (GradientField, Mesh, ScalarField, gradient, integrate, load_field,
                            lp_norm, luxemburg_norm, modular, save_field)
from phinehari.orlicz import PhiSpec, zeta


def test_mesh_validation():
    with pytest.raises(ValueError):
        Mesh.interval(3)
    with pytest.raises(ValueError):
        Mesh(3, (1, 1, 1), (2, 2, 2))
    m = Mesh.rectangle(4, 8, 2.0, 1.0)
    assert m.h == (0.5, 0.125) and m.n_cells == 32 and m.n_interior == 3 * 7


def test_field_boundary_and_finiteness():
    mesh = Mesh.interval(8)
    u = ScalarField(mesh, np.ones(9))
    assert u.values[0] == 0 and u.values[-1] == 0
    with pytest.raises(ValueError):
        ScalarField(mesh, np.ones(9), enforce_boundary=False)
    with pytest.raises(ValueError):
        ScalarField(mesh, np.full(9, np.nan))


def test_gradient_of_zero():
    mesh = Mesh.rectangle(5, 4)
    assert not np.any(gradient(ScalarField.zeros(mesh)).components)


def test_gradient_quadratic_1d_exact():
    mesh = Mesh.interval(64)
    u = ScalarField.from_function(mesh, lambda x: x * (1 - x))
    h = 1 / 64
    i = np.arange(64)
    assert np.allclose(gradient(u).components[0], 1 - (2 * i + 1) * h, rtol=0, atol=1e-14)


def test_gradient_2d_second_order():
    def err(n):
        mesh = Mesh.rectangle(n, n)
        u = ScalarField.from_function(mesh, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        xc, yc = mesh.cell_coords()
        exact = np.stack([np.pi * np.cos(np.pi * xc) * np.sin(np.pi * yc),
                          np.pi * np.sin(np.pi * xc) * np.cos(np.pi * yc)]).reshape(2, -1)
        return np.max(np.abs(gradient(u).components - exact))

    e1, e2 = err(32), err(64)
    assert e1 < 2e-2
    assert e1 / e2 == pytest.approx(4, rel=0.05)


def test_integrate_rules():
    sq = Mesh.rectangle(10, 10)
    assert integrate(np.ones(100), sq) == pytest.approx(1.0, rel=1e-14)
    line = Mesh.interval(100)
    (xc,) = line.cell_coords()
    assert integrate(xc, line) == pytest.approx(0.5, rel=1e-14)
    assert integrate(xc ** 2, line) == pytest.approx(1 / 3 - 1e-4 / 12, rel=1e-13)
    assert integrate(xc ** 2, line) == pytest.approx(0.333325, abs=1e-6)
    with pytest.raises(DimensionMismatch):
        integrate(np.ones(7), line)


def test_luxemburg_constant_gradient_closed_form():
    mesh = Mesh.rectangle(8, 8)
    for p in [1.5, 2.0, 3.0]:
        spec = PhiSpec.power(p)
        c = 2.7
        g = GradientField(mesh, np.stack([np.full(64, c), np.zeros(64)]))
        assert luxemburg_norm(g, spec) == pytest.approx(c * p ** (-1 / p), rel=1e-8)


def test_luxemburg_zero_field():
    mesh = Mesh.interval(8)
    assert luxemburg_norm(gradient(ScalarField.zeros(mesh)), PhiSpec.power(2)) == 0.0


def test_lp_norm_oracles():
    mesh = Mesh.interval(400)
    u = ScalarField.from_function(mesh, lambda x: x * (1 - x))
    # int_0^1 x^2 (1-x)^2 dx = 1/30
    assert lp_norm(u, 2) == pytest.approx(np.sqrt(1 / 30), rel=1e-4)
    assert lp_norm(u * -3.5, 2.7) == pytest.approx(3.5 * lp_norm(u, 2.7), rel=1e-14)
    with pytest.raises(ValueError):
        lp_norm(u, 0.5)


def test_field_roundtrip(tmp_path):
    mesh = Mesh.rectangle(5, 3, 2.0, 1.5)
    rng = np.random.default_rng(0)
    u = ScalarField(mesh, rng.normal(size=mesh.node_shape))
    save_field(u, tmp_path / "u.txt", header="provenance line")
    v = load_field(tmp_path / "u.txt", mesh)
    assert np.array_equal(u.values, v.values) and v.mesh == mesh


def test_field_file_errors(tmp_path):
    mesh = Mesh.interval(8)
    u = ScalarField.from_function(mesh, lambda x: x * (1 - x))
    path = tmp_path / "u.txt"
    save_field(u, path)
    lines = path.read_text().splitlines()
    (tmp_path / "short.txt").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(DimensionMismatch):
        load_field(tmp_path / "short.txt")
    with pytest.raises(DimensionMismatch):
        load_field(path, Mesh.rectangle(8, 8))
    (tmp_path / "bad.txt").write_text("one two\n1.0\n")
    with pytest.raises(FieldFormatError):
        load_field(tmp_path / "bad.txt")


def _field(mesh, coeffs):
    (x,) = mesh.node_coords()
    vals = sum(c * np.sin((k + 1) * np.pi * x) for k, c in enumerate(coeffs))
    return ScalarField(mesh, vals)


coeffs = st.lists(st.floats(-5, 5), min_size=3, max_size=3).filter(
    lambda c: max(abs(v) for v in c) > 1e-2)
SPECS = [PhiSpec.power(1.5), PhiSpec.power(2.0), PhiSpec.double_power(2, 3)]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.family + str(s.p))
@settings(max_examples=60, deadline=None)
@given(a=coeffs, b=coeffs, c=st.floats(0.01, 100))
def test_norm_triangle_and_homogeneity(spec, a, b, c):
    mesh = Mesh.interval(32)
    u, v = _field(mesh, a), _field(mesh, b)
    nu, nv = luxemburg_norm(gradient(u), spec), luxemburg_norm(gradient(v), spec)
    assert luxemburg_norm(gradient(u + v), spec) <= (nu + nv) * (1 + 1e-8)
    assert luxemburg_norm(gradient(u * c), spec) == pytest.approx(c * nu, rel=1e-8)
    assert luxemburg_norm(gradient(-u), spec) == pytest.approx(nu, rel=1e-12)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.family + str(s.p))
@settings(max_examples=60, deadline=None)
@given(a=coeffs, scale=st.floats(1e-3, 1e3))
def test_modular_sandwich(spec, a, scale):
    mesh = Mesh.interval(32)
    g = gradient(_field(mesh, a) * scale)
    ell, m = spec.index_bounds
    z0, z1 = zeta(luxemburg_norm(g, spec), ell, m)
    M = modular(g, spec)
    assert z0 <= M * (1 + 1e-8) and M <= z1 * (1 + 1e-8)


@settings(max_examples=60, deadline=None)
@given(a=coeffs, extra=st.lists(st.floats(0, 3), min_size=32, max_size=32))
def test_luxemburg_monotone_in_pointwise_size(a, extra):
    mesh = Mesh.interval(32)
    spec = PhiSpec.double_power(2, 3)
    g = gradient(_field(mesh, a))
    bigger = GradientField(mesh, g.components * (1 + np.array(extra)))
    assert luxemburg_norm(bigger, spec) >= luxemburg_norm(g, spec) * (1 - 1e-10)
