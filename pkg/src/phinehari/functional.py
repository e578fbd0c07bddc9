"""Discrete energy ``J(u) = int Phi(|grad u|) - (1/q) int |u|^q - int f u``.

The residual returned by :func:`residual` is the exact gradient of the
discrete energy with respect to the interior nodal values, so pairing it
with a test field reproduces the directional derivative of :func:`energy`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, NumericFailure
from .mesh import ScalarField, interior_operators, operators, stiffness
from .orlicz import ExponentData, PhiSpec


@dataclass(frozen=True)
class ProblemData:
    spec: PhiSpec
    exponents: ExponentData
    f: ScalarField
    crit_exp: float | None = None

    @property
    def q(self):
        return self.exponents.ell_star if self.crit_exp is None else float(self.crit_exp)

    @property
    def mesh(self):
        return self.f.mesh

    @property
    def label(self):
        return "critical" if np.isclose(self.q, self.exponents.ell_star) else "surrogate"

    def f_cells(self):
        return self.f.cell_average()

    def with_f(self, f):
        return ProblemData(self.spec, self.exponents, f, self.crit_exp)


class CellState:
    """Per-cell quantities of a field: gradient, its magnitude, cell values."""

    __slots__ = ("grad", "mag", "ubar")

    def __init__(self, u: ScalarField):
        G, A = operators(u.mesh)
        self.grad = np.stack([g @ u.flat for g in G])
        self.mag = np.sqrt(np.sum(self.grad ** 2, axis=0))
        self.ubar = A @ u.flat


def _check(u, data):
    if u.mesh != data.mesh:
        raise DimensionMismatch("u and f live on different meshes")


def energy(u: ScalarField, data: ProblemData) -> float:
    _check(u, data)
    c = CellState(u)
    q = data.q
    dens = data.spec.Phi(c.mag) - np.abs(c.ubar) ** q / q - data.f_cells() * c.ubar
    J = float(np.sum(dens) * u.mesh.cell_volume)
    if not np.isfinite(J):
        raise NumericFailure("energy overflowed")
    return J


def _unit(grad, mag):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(mag > 0, grad / mag, 0.0)


def residual(u: ScalarField, data: ProblemData) -> np.ndarray:
    """Gradient of the discrete energy at ``u``, one entry per interior node."""
    _check(u, data)
    c = CellState(u)
    G, A = interior_operators(u.mesh)
    vol = u.mesh.cell_volume
    # phi(|g|) g = (|g| phi(|g|)) g/|g|, which is 0 at g = 0
    flux = data.spec.tphi(c.mag) * _unit(c.grad, c.mag) * vol
    r = sum(g.T @ fl for g, fl in zip(G, flux))
    src = (np.abs(c.ubar) ** (data.q - 2) * c.ubar if data.q != 2 else c.ubar) + data.f_cells()
    return r - A.T @ (src * vol)


def pairing(res: np.ndarray, v: ScalarField) -> float:
    return float(np.dot(res, v.interior))


def dual_norm(res: np.ndarray, mesh) -> float:
    """``sup_v <res, v> / ||grad v||_2``, i.e. ``sqrt(res^T K^{-1} res)``."""
    z = riesz(res, mesh)
    return float(np.sqrt(max(np.dot(res, z), 0.0)))


_FACTORS = {}


def riesz(res: np.ndarray, mesh) -> np.ndarray:
    """Representer of ``res`` in the discrete ``H^1_0`` inner product."""
    solve = _FACTORS.get(mesh)
    if solve is None:
        solve = spla.factorized(stiffness(mesh))
        _FACTORS[mesh] = solve
    return solve(res)


def psi(u: ScalarField, data: ProblemData) -> float:
    """``<J'(u), u>``."""
    _check(u, data)
    c = CellState(u)
    dens = data.spec.t2phi(c.mag) - np.abs(c.ubar) ** data.q - data.f_cells() * c.ubar
    return float(np.sum(dens) * u.mesh.cell_volume)


def psi_prime_pair(u: ScalarField, data: ProblemData) -> float:
    """``<psi'(u), u> = int phi'|g|^3 + 2 phi |g|^2 - q |u|^q - f u``."""
    _check(u, data)
    c = CellState(u)
    sp = data.spec
    dens = (sp.t3dphi(c.mag) + 2 * sp.t2phi(c.mag) - data.q * np.abs(c.ubar) ** data.q
            - data.f_cells() * c.ubar)
    return float(np.sum(dens) * u.mesh.cell_volume)


def reduced_forms(u: ScalarField, data: ProblemData):
    """Values of J and <psi'(u),u> rewritten with the Nehari constraint.

    Returns ``(J_a, J_b, P_a, P_b)``: the energy with the ``|u|^q`` term
    eliminated in favour of ``f u`` and vice versa, and the same two
    eliminations for ``<psi'(u), u>``. All four agree with the direct
    values exactly when ``psi(u) = 0``.
    """
    _check(u, data)
    c = CellState(u)
    sp, q, vol = data.spec, data.q, u.mesh.cell_volume
    Phi = np.sum(sp.Phi(c.mag)) * vol
    A = np.sum(sp.t2phi(c.mag)) * vol
    D = np.sum(sp.t3dphi(c.mag)) * vol
    B = np.sum(np.abs(c.ubar) ** q) * vol
    F = np.sum(data.f_cells() * c.ubar) * vol
    J_a = Phi - A + (1 - 1 / q) * B
    J_b = Phi - A / q - (1 - 1 / q) * F
    P_a = D + A - (q - 1) * B
    P_b = D + (2 - q) * A - (1 - q) * F
    return float(J_a), float(J_b), float(P_a), float(P_b)


@dataclass(frozen=True)
class FunctionalEval:
    J: float
    residual: np.ndarray
    psi: float
    psi_prime_pair: float


def evaluate(u: ScalarField, data: ProblemData) -> FunctionalEval:
    return FunctionalEval(energy(u, data), residual(u, data), psi(u, data),
                          psi_prime_pair(u, data))
