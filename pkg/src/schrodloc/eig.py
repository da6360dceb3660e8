"""Eigenvalue oracles and support-tracked iterations for the lowest states.

Two solver-backed oracles (dense LAPACK below a dof limit, ARPACK
shift-invert above it) provide certified reference pairs. The iterations of
interest never factor the global operator:

* inverse_power: the classical scaled inverse iteration, used as the exact
  reference dynamics (it does solve globally, via the cached LU).
* pinvit_step: the preconditioned variant. The update
  v + (approximate solve of A u = e1 M v, warm-started at v) is realized as
  k_inner damped patch-Richardson steps, so each outer step touches only
  k_inner extra cell layers and needs no global solve at all.
* block versions of both, iterating K vectors simultaneously; the inexact
  block iteration is the localized algorithm whose final combination is
  checked against the oracle in verification runs.

Errors are measured in the energy norm after projecting out the target
eigenfunction: err(v) = ||| v - c* u1 ||| with c* the a-orthogonal
coefficient, which is the quantity the contraction statements control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import NumericalError
from .fem import (
    AssembledSystem,
    dilate_cells,
    energy_norm,
    mask_allows,
    mask_of_vector,
    mass_norm,
    rayleigh,
)
from .potential import make_rng
from .schwarz import ComposedSmoother, _patch_solve

__all__ = [
    "Spectrum",
    "dense_oracle",
    "shift_invert_oracle",
    "energy_error_to",
    "IterationState",
    "inverse_power",
    "pinvit_step",
    "pinvit",
    "StartBlock",
    "build_start_valleys",
    "build_start_projection",
    "valley_dof_subset",
    "block_iteration",
    "inexact_block_iteration",
]

DENSE_LIMIT = 4096


@dataclass
class Spectrum:
    """Ascending eigenvalues with M-orthonormal vectors and residual certificates."""

    values: np.ndarray
    vectors: np.ndarray
    method: str
    residuals: np.ndarray

    def gap_ratio(self, k: int) -> float:
        """values[0] / values[k], the contraction relevant to a K=k block."""
        return float(self.values[0] / self.values[k])


def _sign_fixed(V):
    V = V.copy()
    for j in range(V.shape[1]):
        i = int(np.argmax(np.abs(V[:, j])))
        if V[i, j] < 0:
            V[:, j] = -V[:, j]
    return V


def _residuals(sys, values, vectors):
    res = np.empty(len(values))
    for j, lam in enumerate(values):
        v = vectors[:, j]
        res[j] = np.linalg.norm(sys.A @ v - lam * (sys.M @ v)) / max(
            np.linalg.norm(sys.M @ v), 1e-300
        )
    return res


def dense_oracle(sys: AssembledSystem, n_ev: int, limit: int = DENSE_LIMIT) -> Spectrum:
    """Full generalized symmetric solve; only for systems up to `limit` dofs."""
    if sys.n > limit:
        raise ValueError(
            "dense oracle refused at n=%d (limit %d); use shift_invert_oracle"
            % (sys.n, limit)
        )
    if not 1 <= n_ev <= sys.n:
        raise ValueError("n_ev must lie in [1, %d], got %d" % (sys.n, n_ev))
    w, V = sla.eigh(sys.A.toarray(), sys.M.toarray())
    V = _sign_fixed(V[:, :n_ev])
    w = w[:n_ev]
    return Spectrum(values=w, vectors=V, method="dense", residuals=_residuals(sys, w, V))


def shift_invert_oracle(
    sys: AssembledSystem,
    n_ev: int,
    shift: float = 0.0,
    tol: float = 1e-8,
    retries: int = 3,
) -> Spectrum:
    """ARPACK shift-invert around `shift` with residual certification.

    The default shift 0 sits below the positive spectrum, so the lowest
    n_ev pairs come out. A factorization failure (shift too close to an
    eigenvalue) retries with a perturbed shift. Residuals above tol raise.
    """
    if n_ev >= sys.n:
        raise ValueError("shift-invert needs n_ev < n")
    v0 = make_rng(1097).standard_normal(sys.n)
    last = None
    for attempt in range(retries):
        try:
            w, V = spla.eigsh(
                sys.A, k=n_ev, M=sys.M, sigma=shift, which="LM", v0=v0
            )
            break
        except RuntimeError as exc:  # singular shift, ARPACK no-convergence
            last = exc
            shift = shift * (1.0 + 1e-4) + 1e-8
    else:
        raise NumericalError("shift-invert oracle failed: %s" % last)
    order = np.argsort(w)
    w, V = w[order], _sign_fixed(V[:, order])
    res = _residuals(sys, w, V)
    if np.any(res > tol):
        raise NumericalError(
            "shift-invert residuals %.3e exceed tol %.1e" % (res.max(), tol)
        )
    return Spectrum(values=w, vectors=V, method="shift-invert", residuals=res)


# ---------------------------------------------------------------------------
# error measure and iteration bookkeeping


def energy_error_to(sys: AssembledSystem, v, u1) -> float:
    """min_c ||| v - c u1 |||: energy distance to the line spanned by u1."""
    au1 = sys.A @ u1
    c = float(v @ au1) / float(u1 @ au1)
    return energy_norm(sys, v - c * u1)


@dataclass
class IterationState:
    """Current block, per-vector cell masks (None for global methods), history.

    history holds parallel lists: per-step errors (when a reference
    eigenvector was supplied), error ratios, Rayleigh quotients of the first
    column, and support cell counts.
    """

    block: np.ndarray
    masks: np.ndarray | None
    history: dict


def _push_history(hist, key, value):
    hist.setdefault(key, []).append(value)


def inverse_power(sys, e1: float, v0, steps: int, u1=None) -> IterationState:
    """Scaled inverse iteration v <- e1 A^{-1} M v via the cached LU.

    With e1 the smallest eigenvalue the iteration map fixes u1, and the
    projected energy error contracts by the eigenvalue ratio per step.
    """
    v = np.asarray(v0, dtype=float).copy()
    hist = {}
    if u1 is not None:
        _push_history(hist, "err", energy_error_to(sys, v, u1))
    for _ in range(steps):
        v = e1 * sys.solve(sys.M @ v)
        _push_history(hist, "rayleigh", rayleigh(sys, v))
        if u1 is not None:
            err = energy_error_to(sys, v, u1)
            prev = hist["err"][-1]
            _push_history(hist, "err", err)
            _push_history(hist, "rate", err / prev if prev > 0 else 0.0)
    return IterationState(block=v[:, None], masks=None, history=hist)


def _approx_solve(smoother: ComposedSmoother, sys, load, u_start):
    """k_inner damped patch-Richardson steps on A u = load, from u_start."""
    prec = smoother.prec
    u = u_start.copy()
    for _ in range(smoother.k_inner):
        r = load - sys.A @ u
        u = u + prec.theta * _patch_solve(prec, r)
    return u


def pinvit_step(sys, smoother: ComposedSmoother, e1: float, v, mask=None):
    """One preconditioned inverse-iteration step with certified support.

    Equivalent to v + Pbar(e1 A^{-1} M v - v) but computed as k_inner local
    Richardson corrections warm-started at v; the mask dilates by exactly
    k_inner layers and the iterate is checked against it.
    """
    v = np.asarray(v, dtype=float)
    base = np.asarray(mask, dtype=bool) if mask is not None else mask_of_vector(sys.sub, v)
    u = _approx_solve(smoother, sys, e1 * (sys.M @ v), v)
    new_mask = dilate_cells(base, layers=smoother.k_inner)
    if not mask_allows(sys.sub, u, new_mask):
        raise NumericalError("pinvit iterate escaped its certified support mask")
    return u, new_mask


def pinvit(sys, smoother, e1: float, v0, steps: int, u1=None, mask=None) -> IterationState:
    """Run pinvit_step `steps` times, recording errors and support growth."""
    v = np.asarray(v0, dtype=float).copy()
    cur_mask = np.asarray(mask, dtype=bool) if mask is not None else mask_of_vector(sys.sub, v)
    hist = {}
    if u1 is not None:
        _push_history(hist, "err", energy_error_to(sys, v, u1))
    for _ in range(steps):
        v, cur_mask = pinvit_step(sys, smoother, e1, v, cur_mask)
        _push_history(hist, "rayleigh", rayleigh(sys, v))
        _push_history(hist, "support_cells", int(mask_of_vector(sys.sub, v).sum()))
        if u1 is not None:
            err = energy_error_to(sys, v, u1)
            prev = hist["err"][-1]
            _push_history(hist, "err", err)
            _push_history(hist, "rate", err / prev if prev > 0 else 0.0)
    return IterationState(block=v[:, None], masks=cur_mask[None], history=hist)


# ---------------------------------------------------------------------------
# starting blocks


@dataclass
class StartBlock:
    """K starting vectors with masks and optional verification coefficients.

    labels carries (valley_index, mode_tuple) per vector for the valley
    construction, or ("projection", j) for projected oracle states. C is the
    matrix of mass inner products (u_i, v_j) against the oracle vectors and
    is only available in verification runs.
    """

    vectors: np.ndarray
    masks: np.ndarray
    rayleighs: np.ndarray
    labels: list
    analytic: np.ndarray | None = None
    C: np.ndarray | None = None
    c_inv_norm: float | None = None

    @property
    def size(self):
        return self.vectors.shape[1]


def attach_coefficients(start: StartBlock, sys, oracle: Spectrum) -> StartBlock:
    """Fill C_ij = (u_i, v_j)_M and its inverse 1-norm from an oracle."""
    K = start.size
    if oracle.vectors.shape[1] < K:
        raise ValueError("oracle carries fewer vectors than the block size")
    U = oracle.vectors[:, :K]
    C = U.T @ (sys.M @ start.vectors)
    try:
        Cinv = np.linalg.inv(C)
    except np.linalg.LinAlgError:
        raise NumericalError(
            "starting block has singular coefficient matrix against the oracle"
        )
    start.C = C
    start.c_inv_norm = float(np.linalg.norm(Cinv, 1))
    return start


def build_start_valleys(sys, stats, K: int, oracle: Spectrum | None = None) -> StartBlock:
    """K lowest product-sine modes over the rectangular valleys.

    Candidate modes are the Dirichlet product sines of each valley, ordered
    by their analytic energy alpha + pi^2 sum (q_a / (eps w_a))^2; the K
    smallest are sampled on the subgrid nodes strictly inside their valley,
    mass-normalized, and handed back with exact valley masks. Modes of
    disjoint valleys share no element, so the block is both M- and
    A-orthogonal across valleys by construction.
    """
    if stats.valleys is None:
        raise ValueError("valley decomposition unavailable for this field")
    if not stats.valleys:
        raise ValueError("field has no valleys to start from")
    grid = sys.field.grid
    sub = sys.sub
    d, m, eps = grid.d, sub.m, grid.eps

    candidates = []
    for vi, valley in enumerate(stats.valleys):
        per_axis = [min(w * m - 1, K + 1) for w in valley.sides]
        if any(p < 1 for p in per_axis):
            continue
        for q in np.ndindex(*per_axis):
            q = tuple(x + 1 for x in q)
            energy = sys.field.alpha + np.pi ** 2 * sum(
                (q[a] / (valley.sides[a] * eps)) ** 2 for a in range(d)
            )
            candidates.append((energy, vi, q))
    candidates.sort(key=lambda t: (t[0], t[1], t[2]))
    if K > len(candidates):
        raise ValueError(
            "requested K=%d but only %d valley modes exist" % (K, len(candidates))
        )

    vectors = np.zeros((sys.n, K))
    masks = np.zeros((K,) + grid.shape, dtype=bool)
    labels = []
    analytic = np.zeros(K)
    for j, (energy, vi, q) in enumerate(candidates[:K]):
        valley = stats.valleys[vi]
        vec = _valley_mode(sys, valley, q)
        nrm = mass_norm(sys, vec)
        if nrm == 0.0:
            raise NumericalError("valley mode sampled to zero; subgrid too coarse")
        vectors[:, j] = vec / nrm
        masks[j][_valley_cells(grid, valley)] = True
        if not mask_allows(sub, vectors[:, j], masks[j]):
            raise NumericalError("valley mode leaked outside its valley cells")
        labels.append((vi, q))
        analytic[j] = energy
    rayleighs = np.array([rayleigh(sys, vectors[:, j]) for j in range(K)])
    block = StartBlock(
        vectors=vectors, masks=masks, rayleighs=rayleighs, labels=labels, analytic=analytic
    )
    if oracle is not None:
        attach_coefficients(block, sys, oracle)
    return block


def _valley_cells(grid, valley):
    ranges = [
        (valley.anchor[a] + np.arange(valley.sides[a])) % grid.inv_eps
        for a in range(grid.d)
    ]
    return np.ix_(*ranges)


def _valley_mode(sys, valley, q):
    """Product sine sampled at nodes strictly inside the valley box."""
    grid, sub = sys.field.grid, sys.sub
    d, m, n1 = grid.d, sub.m, sub.n_axis
    vec = np.zeros(sub.node_shape)
    axes_idx = []
    axes_val = []
    for a in range(d):
        w = valley.sides[a] * m
        t = np.arange(1, w)
        axes_idx.append((valley.anchor[a] * m + t) % n1)
        axes_val.append(np.sin(np.pi * q[a] * t / w))
    prof = axes_val[0]
    for s in axes_val[1:]:
        prof = np.multiply.outer(prof, s)
    vec[np.ix_(*axes_idx)] = prof
    return vec.ravel()


def valley_dof_subset(sys, stats, stride_cells: int):
    """Subgrid dofs strictly inside the valleys at spacing stride_cells cells.

    Every valley contributes at least its center node, so a projection onto
    the spanned hat functions can see every valley even at coarse strides.
    """
    if stats.valleys is None or not stats.valleys:
        raise ValueError("valley decomposition unavailable or empty")
    grid, sub = sys.field.grid, sys.sub
    d, m, n1 = grid.d, sub.m, sub.n_axis
    step = max(1, stride_cells * m)
    dofs = set()
    for valley in stats.valleys:
        axes = []
        for a in range(d):
            w = valley.sides[a] * m
            t = np.arange(step, w, step)
            if len(t) == 0:
                if w < 2:
                    axes = None
                    break
                t = np.array([w // 2])
            axes.append((valley.anchor[a] * m + t) % n1)
        if axes is None:
            continue
        for combo in np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d):
            dofs.add(int(np.ravel_multi_index(combo, sub.node_shape)))
    if not dofs:
        raise ValueError("no interior valley nodes at this stride; refine the subgrid")
    return np.array(sorted(dofs), dtype=np.int64)


def build_start_projection(sys, oracle: Spectrum, dofs, K: int) -> StartBlock:
    """Mass-projection of the first K oracle states onto a local hat subspace.

    v_j solves min ||v - u_j||_M over span{hat_i : i in dofs}; the
    coefficient matrix C and its inverse norm certify how well the local
    space separates the states.
    """
    dofs = np.asarray(dofs, dtype=np.int64)
    if K > oracle.vectors.shape[1]:
        raise ValueError("oracle carries fewer vectors than requested K")
    Mss = sys.M[np.ix_(dofs, dofs)].toarray()
    rhs = (sys.M @ oracle.vectors[:, :K])[dofs]
    try:
        W = sla.solve(Mss, rhs, assume_a="pos")
    except sla.LinAlgError:
        raise NumericalError("local mass matrix singular; duplicate dofs?")
    vectors = np.zeros((sys.n, K))
    vectors[dofs] = W
    masks = np.stack([mask_of_vector(sys.sub, vectors[:, j]) for j in range(K)])
    rayleighs = np.array([rayleigh(sys, vectors[:, j]) for j in range(K)])
    labels = [("projection", j) for j in range(K)]
    block = StartBlock(vectors=vectors, masks=masks, rayleighs=rayleighs, labels=labels)
    return attach_coefficients(block, sys, oracle)


# ---------------------------------------------------------------------------
# block iterations


def _combination_weights(start: StartBlock):
    if start.C is None:
        raise ValueError(
            "starting block carries no coefficient matrix; attach an oracle first"
        )
    e1 = np.zeros(start.size)
    e1[0] = 1.0
    try:
        return np.linalg.solve(start.C, e1)
    except np.linalg.LinAlgError:
        raise NumericalError(
            "starting block %s has singular C; its vectors cannot reach u1"
            % (start.labels,)
        )


def block_iteration(sys, e1: float, start: StartBlock, steps: int, u1=None) -> IterationState:
    """Exact simultaneous inverse iteration V <- e1 A^{-1} M V.

    Global solves, no masks. When u1 is given the history tracks the energy
    error of the combined iterate V x with the weights fixed from the
    starting block's coefficient matrix.
    """
    V = start.vectors.copy()
    hist = {}
    x = None
    if u1 is not None:
        x = _combination_weights(start)
        _push_history(hist, "err", energy_error_to(sys, V @ x, u1))
    for _ in range(steps):
        V = e1 * sys.solve(sys.M @ V)
        if x is not None:
            err = energy_error_to(sys, V @ x, u1)
            prev = hist["err"][-1]
            _push_history(hist, "err", err)
            _push_history(hist, "rate", err / prev if prev > 0 else 0.0)
    return IterationState(block=V, masks=None, history=hist)


def inexact_block_iteration(
    sys,
    smoother: ComposedSmoother,
    e1: float,
    start: StartBlock,
    tol: float,
    gap: float,
    u1=None,
    k_outer: int | None = None,
):
    """Support-tracked block iteration with patch-local approximate solves.

    Runs k_outer = ceil(log(1/tol)/log(1/gap)) outer steps, each replacing
    every column by its pinvit update (k_inner local Richardson steps), then
    combines the block with the weights C^{-1} e_1. Requires the composed
    contraction gamma <= gap**k_outer; a weaker smoother raises with advice
    to raise k_inner. Support masks grow by exactly k_inner layers per outer
    step and are enforced.

    Returns (v_tilde, IterationState). tol=1 is the k=0 regime: no steps,
    just the best combination from the starting block itself.
    """
    if not 0.0 < gap < 1.0:
        raise ValueError("gap ratio must lie in (0,1), got %r" % (gap,))
    if not 0.0 < tol <= 1.0:
        raise ValueError("tol must lie in (0,1], got %r" % (tol,))
    if k_outer is None:
        k_outer = int(math.ceil(math.log(1.0 / tol) / math.log(1.0 / gap)))
    if smoother.gamma > gap ** k_outer * (1.0 + 1e-12):
        raise NumericalError(
            "composed contraction %.3e exceeds gap**k = %.3e; increase k_inner"
            % (smoother.gamma, gap ** k_outer)
        )
    x = _combination_weights(start)
    V = start.vectors.copy()
    masks = start.masks.copy()
    hist = {}
    if u1 is not None:
        _push_history(hist, "err", energy_error_to(sys, V @ x, u1))
    prec = smoother.prec
    for _ in range(k_outer):
        F = e1 * (sys.M @ V)
        U = V.copy()
        for _ in range(smoother.k_inner):
            R = F - sys.A @ U
            U = U + prec.theta * _patch_solve(prec, R)
        V = U
        for j in range(start.size):
            masks[j] = dilate_cells(masks[j], layers=smoother.k_inner)
            if not mask_allows(sys.sub, V[:, j], masks[j]):
                raise NumericalError(
                    "block vector %d escaped its certified support mask" % j
                )
        _push_history(hist, "support_cells", int(max(masks[j].sum() for j in range(start.size))))
        if u1 is not None:
            err = energy_error_to(sys, V @ x, u1)
            prev = hist["err"][-1]
            _push_history(hist, "err", err)
            _push_history(hist, "rate", err / prev if prev > 0 else 0.0)
    v_tilde = V @ x
    return v_tilde, IterationState(block=V, masks=masks, history=hist)
