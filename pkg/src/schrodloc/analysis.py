"""Quantitative experiments on assembled fields.

Everything here reduces a solver run to a handful of numbers that the
theory speaks about: annulus energy norms and their log-linear decay rate,
iteration error curves against the exact solve, spectral-gap ratios, the
Friedrichs constant of the cut-off, and side-by-side spectra of ordered
versus disordered fields.

Distances are measured in eps-cells with the sup norm on the torus, so
"radius k" always means k cell layers. Annulus energies use the exact
per-cell split of the energy form, which makes the monotonicity and
partition identities hold to rounding rather than to quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eig import DENSE_LIMIT, Spectrum, _valley_mode, dense_oracle, shift_invert_oracle
from .errors import NumericalError
from .fem import (
    assemble,
    cell_energies,
    cell_mass,
    energy_norm,
    mask_of_vector,
    mass_norm,
    rayleigh,
)
from .potential import make_rng
from .schwarz import richardson_solve

__all__ = [
    "DecayProfile",
    "GapReport",
    "GreenDecayResult",
    "FriedrichsReport",
    "SpectraComparison",
    "CertificateReport",
    "annulus_energies",
    "find_centers",
    "green_decay",
    "eigen_decay",
    "gap_scan",
    "friedrichs_ratio",
    "spectra_compare",
    "minmax_certificate",
]

FIT_FLOOR = 1e-12


@dataclass
class DecayProfile:
    """Annulus decay record: centers, radii in cells, restricted energy norms.

    fitted_rate is c in the fit log(norm_k) = a - c*k over the radii whose
    annulus norm is above FIT_FLOOR relative to the total; fit_quality is
    the R^2 of that fit. A state whose mass sits entirely at the centers
    leaves nothing to fit and is flagged degenerate with rate +inf.
    """

    centers: list
    radii: np.ndarray
    annulus_energies: np.ndarray
    total_energy: float
    fitted_rate: float
    fit_quality: float
    degenerate: bool = False


@dataclass
class GapReport:
    """Head of the spectrum with the gap ratio E1/E^{K+1} for each K."""

    head: np.ndarray
    gaps: np.ndarray
    chosen_k: int
    gap: float
    target: float
    met_target: bool


def _cell_distance_table(shape, centers):
    """Min over centers of the circular sup-distance, per cell."""
    d = len(shape)
    dist = None
    for z in centers:
        axes = []
        for a in range(d):
            idx = np.arange(shape[a])
            raw = np.abs(idx - int(z[a]) % shape[a])
            axes.append(np.minimum(raw, shape[a] - raw))
        grids = np.meshgrid(*axes, indexing="ij")
        sup = grids[0]
        for g in grids[1:]:
            sup = np.maximum(sup, g)
        dist = sup if dist is None else np.minimum(dist, sup)
    return dist


def _radius_schedule(k_max: int, schedule: str):
    k = np.arange(1, k_max + 1)
    if schedule == "linear":
        return k
    if schedule == "quadratic":
        return k * k
    raise ValueError("schedule must be 'linear' or 'quadratic', got %r" % (schedule,))


def annulus_energies(sys, v, centers, k_max: int, schedule: str = "linear"):
    """Energy norms of v restricted outside sup-balls of growing radius.

    The annulus at step k keeps every cell at circular sup-distance >= r_k
    from all centers, with r_k = k cells (linear schedule) or k^2 cells
    (quadratic schedule). The sequence is non-increasing by nesting and the
    value at r=0 would be the total energy norm.
    """
    per_cell = np.maximum(cell_energies(sys, v), 0.0)
    dist = _cell_distance_table(sys.field.grid.shape, centers)
    radii = _radius_schedule(k_max, schedule)
    norms = np.empty(k_max)
    for i, r in enumerate(radii):
        norms[i] = math.sqrt(float(per_cell[dist >= r].sum()))
    return norms


def _log_linear_fit(radii, norms, total):
    """Fit log(norm) = a - c*k on the points above the relative floor."""
    keep = norms > FIT_FLOOR * max(total, 1e-300)
    if keep.sum() < 3:
        return math.inf, 0.0, True
    x = np.asarray(radii, dtype=float)[keep]
    y = np.log(norms[keep])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return -float(slope), r2, False


def _profile(sys, v, centers, k_max, schedule="linear"):
    total = energy_norm(sys, v)
    norms = annulus_energies(sys, v, centers, k_max, schedule)
    rate, r2, degenerate = _log_linear_fit(np.arange(1, k_max + 1), norms, total)
    return DecayProfile(
        centers=[tuple(int(c) for c in z) for z in centers],
        radii=_radius_schedule(k_max, schedule),
        annulus_energies=norms,
        total_energy=total,
        fitted_rate=rate,
        fit_quality=r2,
        degenerate=degenerate,
    )


def find_centers(sys, v, threshold: float = 0.5):
    """Cells holding local maxima of the cellwise L2 mass above the threshold.

    A cell qualifies when its mass is at least every circular neighbor's and
    at least threshold times the global maximum. Flat states make every cell
    qualify; callers wanting a meaningful profile on such states should pass
    explicit centers instead.
    """
    mass = cell_mass(sys, v)
    shape = mass.shape
    d = len(shape)
    neigh = np.full(shape, -np.inf)
    for offset in np.ndindex(*(3,) * d):
        off = tuple(o - 1 for o in offset)
        if all(o == 0 for o in off):
            continue
        neigh = np.maximum(neigh, np.roll(mass, off, axis=tuple(range(d))))
    top = float(mass.max())
    hits = np.argwhere((mass >= neigh) & (mass >= threshold * top))
    return [tuple(int(c) for c in z) for z in hits]


@dataclass
class GreenDecayResult:
    """Green's-function experiment: decay of the exact solve and of the
    iteration error around a single-cell source."""

    profile: DecayProfile
    rel_errors: np.ndarray
    error_rate: float
    error_fit_quality: float
    gamma_est: float | None
    support_cells: list


def green_decay(sys, prec, source_cell, k_max: int) -> GreenDecayResult:
    """Solve with a mass-normalized single-cell indicator source and measure
    how fast both the solution and the patch-Richardson error decay.

    The exact u comes from the cached LU; the iteration runs k_max damped
    steps with support tracking, so a mask escape raises rather than being
    averaged into the statistics. rel_errors[k-1] = |||u - u^(k)|||/|||u|||.
    """
    grid = sys.field.grid
    source_cell = tuple(int(c) % grid.inv_eps for c in source_cell)
    f = _cell_indicator(sys, source_cell)
    f = f / mass_norm(sys, f)
    load = sys.M @ f
    u = sys.solve(load)
    total = energy_norm(sys, u)
    result = richardson_solve(
        prec,
        sys,
        load,
        steps=k_max,
        source_mask=mask_of_vector(sys.sub, f),
        reference=u,
    )
    rel = np.asarray(result.errors) / total
    err_rate, err_r2, _ = _log_linear_fit(np.arange(1, k_max + 1), rel, 1.0)
    profile = _profile(sys, u, [source_cell], k_max)
    return GreenDecayResult(
        profile=profile,
        rel_errors=rel,
        error_rate=err_rate,
        error_fit_quality=err_r2,
        gamma_est=prec.gamma_est,
        support_cells=result.support_cells,
    )


def _cell_indicator(sys, cell):
    grid, sub = sys.field.grid, sys.sub
    m, n1 = sub.m, sub.n_axis
    vec = np.zeros(sub.node_shape)
    axes = [(cell[a] * m + np.arange(m + 1)) % n1 for a in range(grid.d)]
    vec[np.ix_(*axes)] = 1.0
    return vec.ravel()


def eigen_decay(
    sys,
    state,
    centers="auto",
    k_max: int = 10,
    threshold: float = 0.5,
    schedule: str = "linear",
) -> DecayProfile:
    """Annulus decay profile of an (M-normalized) eigenstate.

    centers="auto" picks the cells of dominant local L2 mass; an explicit
    list of cell tuples overrides it. schedule picks the annulus radii, k
    cells per step or k^2 cells per step; the fitted exponent is per step
    either way. All mass at the centers leaves an empty fit and comes back
    flagged degenerate with rate +inf.
    """
    v = np.asarray(state, dtype=float)
    nrm = mass_norm(sys, v)
    if nrm == 0.0:
        raise ValueError("cannot profile the zero state")
    v = v / nrm
    if isinstance(centers, str):
        if centers != "auto":
            raise ValueError("centers must be 'auto' or a list of cells")
        centers = find_centers(sys, v, threshold)
    if not centers:
        raise ValueError("no centers found or given")
    return _profile(sys, v, centers, k_max, schedule)


def gap_scan(spectrum: Spectrum, k_max: int, target: float = 0.5) -> GapReport:
    """Gap ratios E1/E^{K+1} for K=1..k_max; chooses the smallest K at or
    below the target ratio, or the best available K with a cleared flag."""
    values = np.asarray(spectrum.values, dtype=float)
    if len(values) < k_max + 1:
        raise ValueError(
            "need %d eigenvalues for k_max=%d, got %d" % (k_max + 1, k_max, len(values))
        )
    head = values[: k_max + 1]
    gaps = head[0] / head[1:]
    meets = np.nonzero(gaps <= target)[0]
    if len(meets):
        chosen = int(meets[0]) + 1
        met = True
    else:
        chosen = int(np.argmin(gaps)) + 1
        met = False
    return GapReport(
        head=head,
        gaps=gaps,
        chosen_k=chosen,
        gap=float(gaps[chosen - 1]),
        target=target,
        met_target=met,
    )


@dataclass
class FriedrichsReport:
    """Observed Poincare-type ratios ||eta v|| / ||grad(eta v)||."""

    ratios: np.ndarray
    max_ratio: float
    mean_ratio: float
    eps: float
    max_width: int
    normalized: float
    skipped: int
    mode: str


def friedrichs_ratio(
    sys, cutoff, samples: int, max_width: int = 1, seed: int = 23, mode: str = "smooth"
) -> FriedrichsReport:
    """Sample the cut-off Friedrichs ratio over random fields of test states.

    mode "smooth" draws white noise and passes it once through the inverse
    operator, which pushes the sample toward the low states whose ratio the
    valley width actually governs; mode "white" uses the raw noise, whose
    ratio is dominated by the finest oscillations and stays near h
    regardless of the field. Samples with a vanishing gradient are skipped.
    """
    if mode not in ("smooth", "white"):
        raise ValueError("mode must be 'smooth' or 'white', got %r" % (mode,))
    rng = make_rng(seed)
    eta = cutoff.values
    ratios = []
    skipped = 0
    for _ in range(samples):
        g = rng.standard_normal(sys.n)
        v = sys.solve(sys.M @ g) if mode == "smooth" else g
        nrm = mass_norm(sys, v)
        if nrm == 0.0:
            skipped += 1
            continue
        w = eta * (v / nrm)
        grad2 = float(w @ (sys.K @ w))
        if grad2 <= 0.0:
            skipped += 1
            continue
        ratios.append(mass_norm(sys, w) / math.sqrt(grad2))
    if not ratios:
        raise NumericalError("all Friedrichs samples skipped; cut-off annihilates the field")
    ratios = np.asarray(ratios)
    eps = sys.field.grid.eps
    mx = float(ratios.max())
    return FriedrichsReport(
        ratios=ratios,
        max_ratio=mx,
        mean_ratio=float(ratios.mean()),
        eps=eps,
        max_width=max_width,
        normalized=mx / (eps * max_width),
        skipped=skipped,
        mode=mode,
    )


@dataclass
class SpectraComparison:
    """Lowest eigenvalues of two fields on the same grid, side by side."""

    kind_a: str
    kind_b: str
    values_a: np.ndarray
    values_b: np.ndarray
    m: int
    n_ev: int


def _auto_oracle(sys, n_ev):
    if sys.n <= DENSE_LIMIT:
        return dense_oracle(sys, n_ev)
    return shift_invert_oracle(sys, n_ev)


def spectra_compare(field_a, field_b, m: int, n_ev: int) -> SpectraComparison:
    """Oracle spectra of two fields sharing a grid, for order-vs-disorder plots."""
    ga, gb = field_a.grid, field_b.grid
    if (ga.d, ga.inv_eps) != (gb.d, gb.inv_eps):
        raise ValueError("fields live on different grids: %r vs %r" % (ga, gb))
    spec_a = _auto_oracle(assemble(field_a, _sub(field_a, m)), n_ev)
    spec_b = _auto_oracle(assemble(field_b, _sub(field_b, m)), n_ev)
    return SpectraComparison(
        kind_a=field_a.kind,
        kind_b=field_b.kind,
        values_a=spec_a.values,
        values_b=spec_b.values,
        m=m,
        n_ev=n_ev,
    )


def _sub(field, m):
    from .fem import SubgridSpec

    return SubgridSpec(grid=field.grid, m=m)


@dataclass
class CertificateReport:
    """Min-max certificate from valley modes: the oracle must place at least
    `count` eigenvalues at or below `max_rayleigh`."""

    ell: int
    count: int
    max_rayleigh: float
    rayleighs: np.ndarray


def minmax_certificate(sys, stats, ell: int) -> CertificateReport:
    """Rayleigh bound certifying E^(N*ell^d) via ell^d product modes per valley.

    The discrete sine modes of one valley diagonalize its local pencil, and
    modes of disjoint valleys never share an element, so the whole block is
    exactly orthogonal in both forms and the min-max bound needs no slack.
    """
    if stats.valleys is None or not stats.valleys:
        raise ValueError("valley decomposition unavailable or empty")
    if ell < 1:
        raise ValueError("ell must be >= 1")
    d, m = sys.field.grid.d, sys.sub.m
    rayleighs = []
    for valley in stats.valleys:
        if any(w * m - 1 < ell for w in valley.sides):
            raise ValueError(
                "valley %r too coarse for ell=%d at m=%d" % (valley, ell, m)
            )
        for q in np.ndindex(*(ell,) * d):
            vec = _valley_mode(sys, valley, tuple(x + 1 for x in q))
            rayleighs.append(rayleigh(sys, vec))
    rayleighs = np.asarray(rayleighs)
    return CertificateReport(
        ell=ell,
        count=len(rayleighs),
        max_rayleigh=float(rayleighs.max()),
        rayleighs=rayleighs,
    )
