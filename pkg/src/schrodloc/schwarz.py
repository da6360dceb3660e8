"""Overlapping domain-decomposition preconditioner on vertex patches.

One patch per cell vertex z: the open box of side 2 eps centered at z, whose
interior subgrid nodes span a local space with exact zero boundary
conditions. The patch operator solves the local restriction of A on every
patch and sums the extensions,

    P v = sum_z E_z A_z^{-1} R_z (A v),

which is the sum of the a-orthogonal projections onto the patch spaces. Its
spectrum sits between 1/stable and overlap = 2**d (each element belongs to
exactly 2**d patches), so the damped Richardson iteration with step theta
contracts in the energy norm with a factor below 1 that does not depend on
the potential contrast.

Locality is exact rather than approximate: patch solves only write interior
patch nodes, zero loads produce bitwise-zero outputs, so one application
grows the cell-support mask by at most one layer and entries outside the
certified mask are exactly 0.0.

Patch matrices are dense (at most (2m-1)**d dofs) and Cholesky-factored once
per local occupancy pattern: the restriction of A to a patch only depends on
the potential on the patch's 2**d cells, so patches sharing that pattern
share the factorization.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigvalsh

from .errors import NumericalError
from .fem import AssembledSystem, dilate_cells, energy_norm, mask_allows, mask_of_vector
from .potential import make_rng

__all__ = [
    "ContractionConstants",
    "theoretical_constants",
    "PatchSet",
    "build_patches",
    "SchwarzPreconditioner",
    "build_preconditioner",
    "schwarz_precondition",
    "schwarz_apply",
    "RichardsonResult",
    "richardson_solve",
    "ContractionEstimate",
    "estimate_contraction",
    "spectral_extremes",
    "calibrate_stable_constant",
    "ComposedSmoother",
    "compose_smoother",
]


@dataclass(frozen=True)
class ContractionConstants:
    """Spectral bounds of the patch operator and the derived step size.

    overlap bounds the spectrum from above (2**d, the number of patches
    covering an element); stable = 2**(d+1) (1 + c_stable**2 width**2)
    bounds it from below by 1/stable. theta = 1/(overlap + 1/stable) and
    the energy contraction of id - theta P is at most
    bound = overlap / (1/stable + overlap) < 1.
    """

    overlap: float
    stable: float
    theta: float
    bound: float


def theoretical_constants(d: int, max_width: int, c_stable: float = 1.0) -> ContractionConstants:
    overlap = float(2 ** d)
    stable = float(2 ** (d + 1)) * (1.0 + c_stable ** 2 * max_width ** 2)
    theta = 1.0 / (overlap + 1.0 / stable)
    bound = overlap / (1.0 / stable + overlap)
    return ContractionConstants(overlap=overlap, stable=stable, theta=theta, bound=bound)


@dataclass
class PatchSet:
    """Interior dof indices of every vertex patch plus shared factorizations."""

    dof_idx: np.ndarray
    patch_cells: np.ndarray
    groups: dict
    patch_width: int

    @property
    def n_patches(self):
        return self.dof_idx.shape[0]

    @property
    def patch_size(self):
        return self.dof_idx.shape[1]


def build_patches(sys: AssembledSystem) -> PatchSet:
    """Enumerate the vertex patches and factor one matrix per cell pattern."""
    sub = sys.sub
    grid = sub.grid
    d, m, n1, ne = grid.d, sub.m, sub.n_axis, grid.inv_eps
    width = 2 * m - 1

    vertices = np.stack(
        np.meshgrid(*[np.arange(ne)] * d, indexing="ij"), axis=-1
    ).reshape(-1, d)
    n_patches = vertices.shape[0]

    # interior nodes of (z - eps, z + eps): 2m-1 consecutive nodes per axis
    offsets = np.arange(-(m - 1), m)
    node_strides = np.array([n1 ** (d - 1 - a) for a in range(d)], dtype=np.int64)
    per_axis = [
        (vertices[:, a, None] * m + offsets[None, :]) % n1 for a in range(d)
    ]
    dof_idx = np.zeros((n_patches,) + (width,) * d, dtype=np.int64)
    for a in range(d):
        shape = [n_patches] + [1] * d
        shape[1 + a] = width
        dof_idx = dof_idx + per_axis[a].reshape(shape) * node_strides[a]
    dof_idx = dof_idx.reshape(n_patches, width ** d)

    cell_strides = np.array([ne ** (d - 1 - a) for a in range(d)], dtype=np.int64)
    deltas = np.array(list(itertools.product((-1, 0), repeat=d)), dtype=np.int64)
    patch_cells = (
        ((vertices[:, None, :] + deltas[None, :, :]) % ne) @ cell_strides
    )

    occ = sys.field.occupancy.ravel()
    bits = occ[patch_cells].astype(np.int64)
    keys = bits @ (1 << np.arange(bits.shape[1], dtype=np.int64))

    groups = {}
    A = sys.A
    order = np.arange(n_patches)
    for key in keys[np.sort(np.unique(keys, return_index=True)[1])]:
        ids = order[keys == key]
        rep = dof_idx[ids[0]]
        local = A[np.ix_(rep, rep)].toarray()
        groups[int(key)] = (ids, cho_factor(local, lower=True))
    return PatchSet(dof_idx=dof_idx, patch_cells=patch_cells, groups=groups, patch_width=width)


@dataclass
class SchwarzPreconditioner:
    """Patch set plus a damping step; mode records how theta was chosen."""

    patches: PatchSet
    theta: float
    mode: str
    constants: ContractionConstants | None = None
    lam_min: float | None = None
    lam_max: float | None = None
    gamma_est: float | None = None
    k_inner: int | None = None


def _patch_solve(prec: SchwarzPreconditioner, r):
    """Sum of zero-extended local solves; accepts a vector or an (n,k) block.

    Patches with an all-zero load contribute bitwise zeros, so entries never
    touched by a loaded patch stay exactly 0.0; the support statements rely
    on that.
    """
    single = r.ndim == 1
    rr = r[:, None] if single else r
    out = np.zeros_like(rr)
    dof_idx = prec.patches.dof_idx
    for ids, factor in prec.patches.groups.values():
        idx = dof_idx[ids]
        loads = rr[idx]
        g, p, k = loads.shape
        sols = cho_solve(factor, loads.transpose(1, 0, 2).reshape(p, g * k))
        sols = sols.reshape(p, g, k).transpose(1, 0, 2)
        np.add.at(out, idx.ravel(), sols.reshape(g * p, k))
    return out[:, 0] if single else out


def schwarz_precondition(prec, sys, load, mask=None):
    """Apply sum_z E_z A_z^{-1} R_z to a dual load; mask dilates by one."""
    out = _patch_solve(prec, np.asarray(load, dtype=float))
    return out, (dilate_cells(mask) if mask is not None else None)


def schwarz_apply(prec, sys, v, mask=None):
    """Apply the patch-projection sum P = (patch solve) o A to a vector."""
    out = _patch_solve(prec, sys.A @ np.asarray(v, dtype=float))
    return out, (dilate_cells(mask) if mask is not None else None)


def build_preconditioner(
    sys: AssembledSystem,
    mode: str = "adaptive",
    stats=None,
    c_stable: float = 1.0,
    seed: int = 7,
    extremes_iters: int = 48,
) -> SchwarzPreconditioner:
    """Build patches and pick the damping step.

    theoretical mode takes theta from the constants (needs the geometry
    stats for the valley width); adaptive mode estimates the extreme
    energy-Rayleigh values of P and uses theta = 2/(lam_min + lam_max),
    the step minimizing the contraction bound for a known spectrum.
    """
    patches = build_patches(sys)
    if mode == "theoretical":
        if stats is None:
            raise ValueError("theoretical mode needs geometry stats for the width")
        consts = theoretical_constants(sys.field.grid.d, stats.max_width, c_stable)
        return SchwarzPreconditioner(patches=patches, theta=consts.theta, mode=mode, constants=consts)
    if mode != "adaptive":
        raise ValueError("mode must be 'theoretical' or 'adaptive', got %r" % (mode,))
    prec = SchwarzPreconditioner(patches=patches, theta=1.0, mode=mode)
    lam_min, lam_max = spectral_extremes(prec, sys, iters=extremes_iters, seed=seed)
    prec.lam_min, prec.lam_max = lam_min, lam_max
    prec.theta = 2.0 / (lam_min + lam_max)
    return prec


def spectral_extremes(prec, sys, iters: int = 48, seed: int = 7):
    """Extreme energy-Rayleigh values of P by Rayleigh-Ritz on a Krylov basis.

    Builds an a-orthonormal Krylov basis of P with full reorthogonalization
    (the basis stays small) and returns the extreme Ritz values.
    """
    A = sys.A
    rng = make_rng(seed)
    v = rng.standard_normal(sys.n)
    nrm = math.sqrt(float(v @ (A @ v)))
    if nrm == 0.0:
        raise NumericalError("degenerate start vector in spectral estimation")
    q = v / nrm
    basis = [q]
    a_basis = [A @ q]
    coeffs = []
    for _ in range(iters):
        w = _patch_solve(prec, A @ basis[-1])
        col = np.array([float(w @ aq) for aq in a_basis])
        coeffs.append(col)
        for c, b in zip(col, basis):
            w = w - c * b
        # second orthogonalization pass for float safety
        for b, aq in zip(basis, a_basis):
            w = w - float(w @ aq) * b
        nrm = math.sqrt(max(float(w @ (A @ w)), 0.0))
        if nrm < 1e-13:
            break
        q = w / nrm
        basis.append(q)
        a_basis.append(A @ q)
    k = len(coeffs)
    T = np.zeros((k, k))
    for j, col in enumerate(coeffs):
        T[: len(col), j] = col
    T = 0.5 * (T[:k, :k] + T[:k, :k].T)
    ritz = eigvalsh(T)
    return float(ritz[0]), float(ritz[-1])


@dataclass
class ContractionEstimate:
    gamma: float
    converged: bool
    history: list


def estimate_contraction(prec, sys, iters: int = 80, tol: float = 1e-4, seed: int = 11) -> ContractionEstimate:
    """Energy-norm power iteration on id - theta P.

    The iteration matrix is symmetric in the energy inner product, so the
    norm ratio of successive iterates converges to the contraction factor.
    The estimate is stored on the preconditioner; non-convergence within the
    budget is flagged, not raised.
    """
    A = sys.A
    rng = make_rng(seed)
    x = rng.standard_normal(sys.n)
    x /= math.sqrt(float(x @ (A @ x)))
    history = []
    gamma = 1.0
    converged = False
    for _ in range(iters):
        y = _patch_solve(prec, A @ x)
        g = x - prec.theta * y
        nrm = math.sqrt(max(float(g @ (A @ g)), 0.0))
        if nrm == 0.0:
            gamma, converged = 0.0, True
            break
        prev = gamma
        gamma = nrm
        history.append(gamma)
        x = g / nrm
        if len(history) > 4 and abs(gamma - prev) <= tol * gamma:
            converged = True
            break
    prec.gamma_est = gamma
    return ContractionEstimate(gamma=gamma, converged=converged, history=history)


def calibrate_stable_constant(prec, sys, stats) -> float:
    """Fit c_stable so the theoretical lower bound matches the measured one.

    Solves 2**(d+1) (1 + c**2 width**2) = 1/lam_min for c, clamping at zero
    when the measured lower bound is already above the c = 0 prediction.
    """
    d = sys.field.grid.d
    lam_min = prec.lam_min
    if lam_min is None:
        lam_min, lam_max = spectral_extremes(prec, sys)
        prec.lam_min, prec.lam_max = lam_min, lam_max
    stable_emp = 1.0 / lam_min
    c_sq = max(stable_emp / 2.0 ** (d + 1) - 1.0, 0.0) / stats.max_width ** 2
    return math.sqrt(c_sq)


@dataclass
class RichardsonResult:
    u: np.ndarray
    bound_mask: np.ndarray | None
    mask: np.ndarray | None
    residuals: list
    errors: list | None
    support_cells: list


def richardson_solve(
    prec,
    sys,
    load,
    steps: int,
    u0=None,
    source_mask=None,
    reference=None,
) -> RichardsonResult:
    """Damped patch-corrected Richardson iteration for A u = load.

    Starting from u0 (zero by default), every step adds theta times the
    patch solve of the residual. When source_mask (cells of the load's
    support) is given, the certified mask dilate^k(source_mask) is tracked
    and the iterate is checked against it at every step; the check is exact
    because untouched entries stay bitwise zero. reference, when given, is
    the exact solution and per-step energy errors are recorded.
    """
    load = np.asarray(load, dtype=float)
    track = source_mask is not None
    if track:
        base = np.asarray(source_mask, dtype=bool)
        bound = base.copy()
    else:
        base = bound = None
    u = np.zeros_like(load) if u0 is None else np.asarray(u0, dtype=float).copy()
    residuals, support, errors = [], [], ([] if reference is not None else None)
    for _ in range(steps):
        r = load - sys.A @ u
        u = u + prec.theta * _patch_solve(prec, r)
        residuals.append(float(np.linalg.norm(r)))
        if track:
            bound = dilate_cells(bound)
            if not mask_allows(sys.sub, u, bound):
                raise NumericalError("iterate escaped its certified support mask")
            support.append(int(mask_of_vector(sys.sub, u).sum()))
        if reference is not None:
            errors.append(energy_norm(sys, u - reference))
    mask = mask_of_vector(sys.sub, u) if track else None
    return RichardsonResult(
        u=u, bound_mask=bound, mask=mask, residuals=residuals, errors=errors, support_cells=support
    )


@dataclass
class ComposedSmoother:
    """k_inner damped Richardson steps used as one approximate solve."""

    prec: SchwarzPreconditioner
    k_inner: int
    gamma: float


def compose_smoother(prec, sys, target_gamma: float, max_inner: int = 100_000) -> ComposedSmoother:
    """Pick k_inner so the composed contraction gamma_est**k_inner <= target."""
    if not 0.0 < target_gamma < 1.0:
        raise ValueError("target_gamma must lie in (0,1), got %r" % (target_gamma,))
    if prec.gamma_est is None:
        estimate_contraction(prec, sys)
    g = prec.gamma_est
    if g >= 1.0:
        raise NumericalError(
            "no contraction measured (gamma_est=%.6f); cannot compose a smoother" % g
        )
    if g <= 0.0:
        k = 1
    else:
        # the tiny shave keeps exact powers of gamma_est at their integer count
        k = max(1, int(math.ceil(math.log(target_gamma) / math.log(g) - 1e-9)))
    if k > max_inner:
        raise NumericalError(
            "composition needs %d inner steps, above the limit %d" % (k, max_inner)
        )
    prec.k_inner = k
    return ComposedSmoother(prec=prec, k_inner=k, gamma=g ** k)
