"""Structured meshes on boxes in 1D/2D and fields vanishing on the boundary.

Nodes carry the unknowns. Each cell gets one gradient vector (the average of
the edge differences of its corner values, i.e. the bilinear gradient at the
cell centre) and one value (the average of its corner values). Every
integral in the package is a plain sum over cells of such values times the
cell volume.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, FieldFormatError
from .orlicz import PhiSpec


@dataclass(frozen=True)
class Mesh:
    dim: int
    extents: tuple
    cells: tuple

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if len(self.extents) != self.dim or len(self.cells) != self.dim:
            raise ValueError("extents and cells need one entry per axis")
        if any(e <= 0 for e in self.extents) or any(int(n) < 1 for n in self.cells):
            raise ValueError("extents and cell counts must be positive")
        if int(np.prod(self.cells)) < 4:
            raise ValueError("mesh needs at least 4 cells")
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        object.__setattr__(self, "cells", tuple(int(n) for n in self.cells))

    @classmethod
    def interval(cls, n, length=1.0):
        return cls(1, (length,), (n,))

    @classmethod
    def rectangle(cls, nx, ny, lx=1.0, ly=1.0):
        return cls(2, (lx, ly), (nx, ny))

    @property
    def h(self):
        return tuple(e / n for e, n in zip(self.extents, self.cells))

    @property
    def node_shape(self):
        return tuple(n + 1 for n in self.cells)

    @property
    def n_nodes(self):
        return int(np.prod(self.node_shape))

    @property
    def n_cells(self):
        return int(np.prod(self.cells))

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    @property
    def measure(self):
        return float(np.prod(self.extents))

    def axes(self):
        return [np.linspace(0.0, e, n + 1) for e, n in zip(self.extents, self.cells)]

    def node_coords(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def cell_coords(self):
        mids = [0.5 * (a[1:] + a[:-1]) for a in self.axes()]
        return np.meshgrid(*mids, indexing="ij")

    @cached_property
    def boundary_mask(self):
        mask = np.zeros(self.node_shape, dtype=bool)
        if self.dim == 1:
            mask[[0, -1]] = True
        else:
            mask[[0, -1], :] = True
            mask[:, [0, -1]] = True
        return mask

    @cached_property
    def interior_index(self):
        """Flat (row-major) indices of interior nodes."""
        return np.flatnonzero(~self.boundary_mask.ravel())

    @property
    def n_interior(self):
        return len(self.interior_index)

    def digest(self):
        key = f"{self.dim}|{self.extents}|{self.cells}".encode()
        return hashlib.sha256(key).hexdigest()[:12]


@lru_cache(maxsize=32)
def operators(mesh: Mesh):
    """Sparse ``(grad_components, cell_average)`` acting on flat nodal vectors."""
    if mesh.dim == 1:
        n = mesh.cells[0]
        (h,) = mesh.h
        D = sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1)) / h
        A = sp.diags([0.5 * np.ones(n), 0.5 * np.ones(n)], [0, 1], shape=(n, n + 1))
        return (D.tocsr(),), A.tocsr()
    nx, ny = mesh.cells
    hx, hy = mesh.h
    dx = sp.diags([-np.ones(nx), np.ones(nx)], [0, 1], shape=(nx, nx + 1))
    ax = sp.diags([0.5 * np.ones(nx), 0.5 * np.ones(nx)], [0, 1], shape=(nx, nx + 1))
    dy = sp.diags([-np.ones(ny), np.ones(ny)], [0, 1], shape=(ny, ny + 1))
    ay = sp.diags([0.5 * np.ones(ny), 0.5 * np.ones(ny)], [0, 1], shape=(ny, ny + 1))
    Gx = sp.kron(dx, ay) / hx
    Gy = sp.kron(ax, dy) / hy
    A = sp.kron(ax, ay)
    return (Gx.tocsr(), Gy.tocsr()), A.tocsr()


@lru_cache(maxsize=32)
def interior_operators(mesh: Mesh):
    """The operators of :func:`operators` restricted to interior columns."""
    G, A = operators(mesh)
    idx = mesh.interior_index
    return tuple(g[:, idx] for g in G), A[:, idx]


@lru_cache(maxsize=32)
def stiffness(mesh: Mesh):
    """Interior stiffness matrix ``sum_d G_d^T G_d * vol`` (sparse, SPD)."""
    G, _ = interior_operators(mesh)
    K = sum(g.T @ g for g in G) * mesh.cell_volume
    return K.tocsc()


class ScalarField:
    """Nodal values on a mesh, zero on every boundary node."""

    __slots__ = ("mesh", "values")

    def __init__(self, mesh: Mesh, values, enforce_boundary=True):
        v = np.array(values, dtype=float).reshape(mesh.node_shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        if enforce_boundary:
            v[mesh.boundary_mask] = 0.0
        elif np.any(v[mesh.boundary_mask] != 0):
            raise ValueError("field does not vanish on the boundary")
        v.setflags(write=False)
        self.mesh = mesh
        self.values = v

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.node_shape))

    @classmethod
    def from_function(cls, mesh, func):
        return cls(mesh, func(*mesh.node_coords()))

    @classmethod
    def from_interior(cls, mesh, vec):
        full = np.zeros(mesh.n_nodes)
        full[mesh.interior_index] = vec
        return cls(mesh, full)

    @property
    def flat(self):
        return self.values.ravel()

    @property
    def interior(self):
        return self.flat[self.mesh.interior_index]

    def cell_average(self):
        _, A = operators(self.mesh)
        return A @ self.flat

    def __mul__(self, c):
        return ScalarField(self.mesh, self.values * float(c))

    __rmul__ = __mul__

    def __add__(self, other):
        _same_mesh(self, other)
        return ScalarField(self.mesh, self.values + other.values)

    def __sub__(self, other):
        _same_mesh(self, other)
        return ScalarField(self.mesh, self.values - other.values)

    def __neg__(self):
        return ScalarField(self.mesh, -self.values)

    def __abs__(self):
        return ScalarField(self.mesh, np.abs(self.values))

    def is_zero(self):
        return not np.any(self.values)


def _same_mesh(a, b):
    if a.mesh != b.mesh:
        raise DimensionMismatch("fields live on different meshes")


@dataclass(frozen=True)
class GradientField:
    mesh: Mesh
    components: np.ndarray  # shape (dim, n_cells)

    @property
    def magnitude(self):
        return np.sqrt(np.sum(self.components ** 2, axis=0))


def gradient(u: ScalarField) -> GradientField:
    G, _ = operators(u.mesh)
    return GradientField(u.mesh, np.stack([g @ u.flat for g in G]))


def integrate(cell_values, mesh: Mesh) -> float:
    cell_values = np.asarray(cell_values, dtype=float).ravel()
    if cell_values.size != mesh.n_cells:
        raise DimensionMismatch(f"expected {mesh.n_cells} cell values, got {cell_values.size}")
    return float(np.sum(cell_values) * mesh.cell_volume)


def _cell_magnitudes(g):
    if isinstance(g, GradientField):
        return g.magnitude
    if isinstance(g, ScalarField):
        return np.abs(g.cell_average())
    raise TypeError("expected a GradientField or a ScalarField")


def luxemburg_from_cells(values, vol, spec: PhiSpec, tol=1e-10):
    """Luxemburg norm of nonnegative per-cell magnitudes ``values``."""
    values = np.asarray(values, dtype=float)
    if not np.any(values):
        return 0.0
    M1 = float(np.sum(spec.Phi(values)) * vol)
    ell, m = spec.index_bounds
    # modular sandwich brackets the root: zeta0(1/lam) M1 <= M(lam) <= zeta1(1/lam) M1
    lo = min(M1 ** (1 / ell), M1 ** (1 / m)) * (1 - 1e-9)
    hi = max(M1 ** (1 / ell), M1 ** (1 / m)) * (1 + 1e-9)

    def modular(lam):
        return float(np.sum(spec.Phi(values / lam)) * vol)

    # guard against an inexact (tabulated) index bound
    while modular(lo) < 1:
        lo *= 0.5
    while modular(hi) > 1:
        hi *= 2.0
    lam = np.sqrt(lo * hi)
    for _ in range(200):
        lam = np.sqrt(lo * hi)
        M = modular(lam)
        if abs(M - 1) <= tol or hi / lo - 1 <= 1e-15:
            break
        if M > 1:
            lo = lam
        else:
            hi = lam
    return float(lam)


def luxemburg_norm(g, spec: PhiSpec) -> float:
    """``inf{lam > 0 : int Phi(|g| / lam) <= 1}`` by bisection on the modular."""
    return luxemburg_from_cells(_cell_magnitudes(g), g.mesh.cell_volume, spec)


def modular(g, spec: PhiSpec) -> float:
    return integrate(spec.Phi(_cell_magnitudes(g)), g.mesh)


def lp_norm(u: ScalarField, p: float) -> float:
    if p < 1:
        raise ValueError("p must be >= 1")
    return integrate(np.abs(u.cell_average()) ** p, u.mesh) ** (1.0 / p)


def save_field(u: ScalarField, path, header=None):
    mesh = u.mesh
    lines = []
    if header:
        lines.append(f"# {header}")
    lines.append(" ".join([str(mesh.dim)] + [str(n) for n in mesh.cells]))
    lines.append(" ".join(repr(e) for e in mesh.extents))
    lines.extend(repr(float(x)) for x in u.flat)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_field(path, mesh: Mesh | None = None) -> ScalarField:
    """Read a field file; ``mesh`` (if given) must match the file header."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if len(lines) < 2:
        raise FieldFormatError(f"{path}: missing header lines")
    try:
        head = [int(x) for x in lines[0].split()]
        extents = tuple(float(x) for x in lines[1].split())
    except ValueError as exc:
        raise FieldFormatError(f"{path}: malformed header: {exc}") from None
    if not head or head[0] not in (1, 2) or len(head) != head[0] + 1:
        raise FieldFormatError(f"{path}: header must read 'dim nx [ny]'")
    dim, cells = head[0], tuple(head[1:])
    if len(extents) != dim:
        raise FieldFormatError(f"{path}: expected {dim} extents")
    file_mesh = Mesh(dim, extents, cells)
    if mesh is not None and mesh != file_mesh:
        raise DimensionMismatch(f"{path}: file mesh {file_mesh} does not match {mesh}")
    try:
        vals = np.array([float(x) for x in lines[2:]])
    except ValueError as exc:
        raise FieldFormatError(f"{path}: bad nodal value: {exc}") from None
    if vals.size != file_mesh.n_nodes:
        raise DimensionMismatch(
            f"{path}: expected {file_mesh.n_nodes} nodal values, found {vals.size}")
    return ScalarField(file_mesh, vals, enforce_boundary=False)
