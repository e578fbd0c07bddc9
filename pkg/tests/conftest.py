import numpy as np
import pytest

from phinehari.constants import auto_scale_f, build_report, check_f_conditions, estimate_S
from phinehari.functional import ProblemData
from phinehari.mesh import Mesh, ScalarField
from phinehari.orlicz import PhiSpec, extract_exponents


def bump(mesh, center=0.5, width=0.1):
    return ScalarField.from_function(
        mesh, lambda x: 4 * x * (1 - x) * np.exp(-0.5 * (x - center) ** 2 / width ** 2))


def sine(mesh, k=1):
    L = mesh.extents[0]
    return ScalarField.from_function(mesh, lambda x: np.sin(k * np.pi * x / L))


@pytest.fixture(scope="session")
def reference():
    """Laplacian case, N = 4, q = 4, 128 cells, bump source at half of Lambda."""
    spec = PhiSpec.power(2.0)
    ex = extract_exponents(spec, 4)
    mesh = Mesh.interval(128)
    est = estimate_S(mesh, spec, ex, q=4.0, seed=0)
    report = build_report(est.S, ex, 4.0, mesh)
    f = auto_scale_f(bump(mesh), 0.5, report)
    data = ProblemData(spec, ex, f)
    check_f_conditions(f, report, data, [])
    return data, report


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
