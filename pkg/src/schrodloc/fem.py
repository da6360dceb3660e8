"""Q1 finite elements on the periodic unit cube.

Each potential cell is refined into m**d cubic elements of side h = eps/m,
and the bilinear form

    a(u, v) = int grad(u).grad(v) + V u v dx,    (u, v) = int u v dx

is assembled with exact integrals of the Q1 tensor-product basis (the local
matrices are Kronecker products of the 1D stiffness and mass blocks, and the
potential is constant on every element). Periodicity is pure index
arithmetic: node (j + n) mod n is node j, so the matrices carry no boundary
rows at all.

The module also builds the plateau cutoff used by the energy lower bound
machinery (1 outside the barrier cells, 0 on the centered eps/2 cube of each
barrier cell, multilinear ramp across the eps/4 collar) and provides the
cell-level support masks that the preconditioner and the eigeniterations use
to certify locality: a cell belongs to the mask of a vector when any subgrid
node on the closed cell carries a nonzero entry, which makes "one patch
application grows the support by one cell layer" an exact statement.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .potential import PotentialField

__all__ = [
    "SubgridSpec",
    "AssembledSystem",
    "CutoffField",
    "assemble",
    "energy_norm",
    "energy_split",
    "mass_norm",
    "rayleigh",
    "build_cutoff",
    "apply_cutoff",
    "cell_energies",
    "cell_mass",
    "mask_of_vector",
    "dilate_cells",
    "mask_allows",
    "dump_system",
    "dump_vector",
]

DEFAULT_DOF_LIMIT = 500_000


@dataclass(frozen=True)
class SubgridSpec:
    """Uniform refinement of the cell grid: m subintervals per cell per axis."""

    grid: object
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1, got %r" % (self.m,))

    @property
    def n_axis(self):
        return self.grid.inv_eps * self.m

    @property
    def h(self):
        return 1.0 / self.n_axis

    @property
    def node_shape(self):
        return (self.n_axis,) * self.grid.d

    @property
    def ndof(self):
        return self.n_axis ** self.grid.d


def _local_blocks(d, h):
    """Exact Q1 element matrices as Kronecker products of 1D blocks."""
    k1 = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    m1 = np.array([[2.0, 1.0], [1.0, 2.0]]) * (h / 6.0)
    mass = np.array([[1.0]])
    for _ in range(d):
        mass = np.kron(mass, m1)
    stiff = np.zeros_like(mass)
    for axis in range(d):
        term = np.array([[1.0]])
        for a in range(d):
            term = np.kron(term, k1 if a == axis else m1)
        stiff += term
    return stiff, mass


class AssembledSystem:
    """Sparse K (stiffness), M (mass), MV (potential mass) and A = K + MV.

    Also keeps the element-to-dof map and the local blocks so restricted
    energies and cell masses can be evaluated elementwise, plus a lazily
    cached sparse LU of A for the solver-based oracles.
    """

    def __init__(self, field, sub, K, M, MV, el_dofs, el_cells, local_stiff, local_mass):
        self.field = field
        self.sub = sub
        self.K = K
        self.M = M
        self.MV = MV
        self.A = (K + MV).tocsr()
        self.el_dofs = el_dofs
        self.el_cells = el_cells
        self.local_stiff = local_stiff
        self.local_mass = local_mass
        self._lu = None

    @property
    def n(self):
        return self.A.shape[0]

    def solve(self, rhs):
        """Direct solve A x = rhs through a cached sparse LU factorization."""
        if self._lu is None:
            self._lu = spla.splu(self.A.tocsc())
        return self._lu.solve(rhs)


def _symmetrized(mat):
    out = ((mat + mat.T) * 0.5).tocsr()
    out.sum_duplicates()
    out.sort_indices()
    return out


def assemble(field: PotentialField, sub: SubgridSpec, dof_limit: int = DEFAULT_DOF_LIMIT) -> AssembledSystem:
    """Assemble the periodic Q1 system for a potential field.

    Every element lies inside exactly one cell, so the potential mass is the
    plain element mass scaled by that cell's value. The three matrices are
    symmetrized exactly after duplicate summation.
    """
    if sub.grid is not field.grid and sub.grid != field.grid:
        raise ValueError("subgrid was built for a different cell grid")
    if sub.ndof > dof_limit:
        raise ValueError(
            "refusing to assemble %d dofs (limit %d); raise dof_limit if intended"
            % (sub.ndof, dof_limit)
        )
    if field.alpha == 0.0 and field.n_beta == 0:
        raise ValueError("potential is identically zero, A would be singular")

    grid = field.grid
    d, m, n1 = grid.d, sub.m, sub.n_axis
    stiff, mass = _local_blocks(d, sub.h)
    n_corner = 2 ** d

    axes = [np.arange(n1)] * d
    anchor = np.meshgrid(*axes, indexing="ij")
    el_dofs = np.empty((sub.ndof, n_corner), dtype=np.int64)
    for c, delta in enumerate(itertools.product((0, 1), repeat=d)):
        coords = [(anchor[a] + delta[a]) % n1 for a in range(d)]
        el_dofs[:, c] = np.ravel_multi_index(coords, sub.node_shape).ravel()
    cell_coords = [anchor[a] // m for a in range(d)]
    el_cells = np.ravel_multi_index(cell_coords, grid.shape).ravel()
    v_el = field.values().ravel()[el_cells]

    rows = np.broadcast_to(el_dofs[:, :, None], (sub.ndof, n_corner, n_corner)).ravel()
    cols = np.broadcast_to(el_dofs[:, None, :], (sub.ndof, n_corner, n_corner)).ravel()

    def build(data):
        mat = sp.coo_matrix((data.ravel(), (rows, cols)), shape=(sub.ndof, sub.ndof))
        return _symmetrized(mat.tocsr())

    K = build(np.broadcast_to(stiff, (sub.ndof, n_corner, n_corner)))
    M = build(np.broadcast_to(mass, (sub.ndof, n_corner, n_corner)))
    MV = build(v_el[:, None, None] * mass)
    return AssembledSystem(field, sub, K, M, MV, el_dofs, el_cells, stiff, mass)


# ---------------------------------------------------------------------------
# norms and quotients


def energy_norm(sys: AssembledSystem, v) -> float:
    """sqrt(v' A v), the norm induced by the bilinear form."""
    q = float(v @ (sys.A @ v))
    return float(np.sqrt(max(q, 0.0)))


def energy_split(sys: AssembledSystem, v):
    """(gradient part v'Kv, potential part v'MVv) of the squared energy."""
    return float(v @ (sys.K @ v)), float(v @ (sys.MV @ v))


def mass_norm(sys: AssembledSystem, v) -> float:
    q = float(v @ (sys.M @ v))
    return float(np.sqrt(max(q, 0.0)))


def rayleigh(sys: AssembledSystem, v) -> float:
    """Energy quotient v'Av / v'Mv; rejects the zero vector."""
    mm = float(v @ (sys.M @ v))
    if mm <= 0.0:
        raise ValueError("Rayleigh quotient of a (numerically) zero vector")
    return float(v @ (sys.A @ v)) / mm


def _element_quadratic(sys, v, local):
    ue = v[sys.el_dofs]
    return np.einsum("ea,ab,eb->e", ue, local, ue)


def cell_energies(sys: AssembledSystem, v):
    """Per-cell squared energy of v (gradient plus potential), grid-shaped.

    Summing over all cells reproduces v'Av up to roundoff, so restricted
    energy norms over cell sets are exact partial sums.
    """
    v_el = sys.field.values().ravel()[sys.el_cells]
    e = _element_quadratic(sys, v, sys.local_stiff)
    e = e + v_el * _element_quadratic(sys, v, sys.local_mass)
    out = np.zeros(sys.field.grid.n_cells)
    np.add.at(out, sys.el_cells, e)
    return out.reshape(sys.field.grid.shape)


def cell_mass(sys: AssembledSystem, v):
    """Per-cell squared L2 mass of v, grid-shaped."""
    e = _element_quadratic(sys, v, sys.local_mass)
    out = np.zeros(sys.field.grid.n_cells)
    np.add.at(out, sys.el_cells, e)
    return out.reshape(sys.field.grid.shape)


# ---------------------------------------------------------------------------
# cutoff


@dataclass
class CutoffField:
    """Nodal cutoff: 1 outside barriers, 0 on each barrier's central cube."""

    sub: SubgridSpec
    values: np.ndarray
    max_gradient: float


def build_cutoff(field: PotentialField, sub: SubgridSpec) -> CutoffField:
    """Plateau cutoff with an exact eps/4 collar on the subgrid.

    Inside every barrier cell the nodal value is min(1, 4 dist/eps) with
    dist the sup-norm distance to the cell's closed central cube of side
    eps/2; outside barrier cells it is 1. m must be divisible by 4 so the
    central cube and the collar land exactly on subgrid nodes. The reported
    max_gradient is the measured elementwise sup of |grad eta| (bounded by
    4 sqrt(d)/eps by construction).
    """
    if sub.m % 4 != 0:
        raise ValueError("cutoff needs m divisible by 4, got m=%d" % sub.m)
    grid = field.grid
    d, m = grid.d, sub.m
    eps = grid.eps

    axes = [np.arange(sub.n_axis)] * d
    nodes = np.meshgrid(*axes, indexing="ij")
    cell_idx = tuple(nodes[a] // m for a in range(d))
    in_beta = field.occupancy[cell_idx]

    # sup-norm distance to the central cube, per node, within its floor cell
    g = np.zeros(sub.node_shape)
    for a in range(d):
        t = (nodes[a] % m) * sub.h
        g = np.maximum(g, np.maximum(0.0, np.abs(t - 0.5 * eps) - 0.25 * eps))
    eta = np.where(in_beta, np.minimum(1.0, 4.0 * g / eps), 1.0)
    eta = eta.ravel()

    # measured gradient bound: max edge difference per axis over all elements
    grad_sq = np.zeros(sub.ndof)
    corners = list(itertools.product((0, 1), repeat=d))
    for a in range(d):
        diff = np.zeros(sub.ndof)
        for c0, delta in enumerate(corners):
            if delta[a] == 1:
                continue
            c1 = corners.index(tuple(1 if x == a else delta[x] for x in range(d)))
            e = np.abs(eta[_corner_col(field, sub, c1)] - eta[_corner_col(field, sub, c0)])
            diff = np.maximum(diff, e)
        grad_sq += (diff / sub.h) ** 2
    max_grad = float(np.sqrt(grad_sq.max())) if sub.ndof else 0.0
    return CutoffField(sub=sub, values=eta, max_gradient=max_grad)


_corner_cache = {}


def _corner_col(field, sub, corner):
    key = (field.grid.d, sub.n_axis, corner)
    cached = _corner_cache.get(key)
    if cached is not None:
        return cached
    d, n1 = field.grid.d, sub.n_axis
    deltas = list(itertools.product((0, 1), repeat=d))[corner]
    axes = [np.arange(n1)] * d
    anchor = np.meshgrid(*axes, indexing="ij")
    coords = [(anchor[a] + deltas[a]) % n1 for a in range(d)]
    col = np.ravel_multi_index(coords, sub.node_shape).ravel()
    _corner_cache[key] = col
    return col


def apply_cutoff(cutoff: CutoffField, v):
    """Nodal product of the cutoff with a coefficient vector."""
    v = np.asarray(v, dtype=float)
    if v.shape != cutoff.values.shape:
        raise ValueError("vector length does not match the cutoff subgrid")
    return cutoff.values * v


# ---------------------------------------------------------------------------
# cell-level support masks


def mask_of_vector(sub: SubgridSpec, v, tol: float = 0.0):
    """Cells whose closed node set carries an entry with |v| > tol."""
    nz = (np.abs(np.asarray(v)) > tol).reshape(sub.node_shape)
    inv_eps, m, n1 = sub.grid.inv_eps, sub.m, sub.n_axis
    base = np.arange(inv_eps) * m
    arr = nz
    for axis in range(sub.grid.d):
        acc = None
        for s in range(m + 1):
            sl = np.take(arr, (base + s) % n1, axis=axis)
            acc = sl if acc is None else (acc | sl)
        arr = acc
    return arr


def dilate_cells(mask, layers: int = 1):
    """Grow a cell mask by full 3**d neighborhoods, torus wrap included."""
    out = np.asarray(mask, dtype=bool).copy()
    for _ in range(layers):
        for axis in range(out.ndim):
            out = out | np.roll(out, 1, axis=axis) | np.roll(out, -1, axis=axis)
    return out


def mask_allows(sub: SubgridSpec, v, mask) -> bool:
    """True when every cell touched by a nonzero entry of v is masked.

    This is the strict containment mask_of_vector(v) <= mask; it is the
    invariant the patch operators propagate by exactly one dilation.
    """
    touched = mask_of_vector(sub, v)
    return not bool((touched & ~np.asarray(mask, dtype=bool)).any())


# ---------------------------------------------------------------------------
# artifacts


def system_digest(sys: AssembledSystem) -> str:
    """Short content hash of the field and discretization."""
    h = hashlib.sha256()
    f = sys.field
    h.update(
        json.dumps(
            {
                "kind": f.kind,
                "d": f.grid.d,
                "inv_eps": f.grid.inv_eps,
                "seed": f.grid.seed,
                "alpha": f.alpha,
                "beta": f.beta,
                "m": sys.sub.m,
            },
            sort_keys=True,
        ).encode()
    )
    h.update(np.packbits(f.occupancy.ravel().astype(np.uint8)).tobytes())
    return h.hexdigest()[:16]


def dump_system(sys: AssembledSystem, directory):
    """Write A, K, M, MV as 'row col value' text plus a JSON sidecar."""
    os.makedirs(directory, exist_ok=True)
    names = {"A": sys.A, "K": sys.K, "M": sys.M, "MV": sys.MV}
    for name, mat in names.items():
        coo = mat.tocoo()
        with open(os.path.join(directory, name + ".txt"), "w") as fh:
            fh.write("# row col value\n")
            for r, c, x in zip(coo.row, coo.col, coo.data):
                fh.write("%d %d %.17g\n" % (r, c, x))
    sidecar = {
        "n": sys.n,
        "d": sys.field.grid.d,
        "inv_eps": sys.field.grid.inv_eps,
        "m": sys.sub.m,
        "h": sys.sub.h,
        "digest": system_digest(sys),
        "matrices": sorted(names),
    }
    with open(os.path.join(directory, "system.json"), "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)
        fh.write("\n")


def dump_vector(path, v, digest: str = ""):
    with open(path, "w") as fh:
        if digest:
            fh.write("# digest=%s\n" % digest)
        fh.write("index,value\n")
        for i, x in enumerate(np.asarray(v).ravel()):
            fh.write("%d,%.17g\n" % (i, x))
