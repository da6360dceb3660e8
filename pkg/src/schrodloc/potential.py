"""Disorder potentials on the periodic unit cube.

The domain is the torus [0,1)^d split into inv_eps**d cubic cells of side
eps = 1/inv_eps. A potential takes the value beta on a set of "barrier"
cells and a much smaller value alpha on the rest. The alpha region is where
low eigenstates live, so the geometry analysis here is all about the shape
of that region: maximal alpha-cubes, their overlap, and (where the field has
product or block structure) the decomposition into rectangular valleys.

Five generators are provided:

* gen_periodic: the checkerboard-like reference pattern, beta on every cell
  with at least one even coordinate, alpha on the rest.
* gen_iid: independent Bernoulli beta-cells.
* gen_tensor: product of d independent 1D Bernoulli factor fields; the
  alpha region is a union of rectangular valleys, each surrounded by a
  beta layer wherever its factor has a transition.
* gen_domino: a random exact tiling by j-blocks (a 2j x j x ... x j box
  split into an alpha j-cube and a beta j-cube), levels following a
  geometric law.
* gen_planted: deterministic wells of prescribed widths on a barrier
  background, for calibration runs where the geometry must be known.

All randomness comes from numpy's Philox generator (counter-based) keyed by
the explicit seed in the GridSpec, so every field is reproducible from its
GridSpec alone.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridSpec",
    "PotentialField",
    "Valley",
    "GeometryStats",
    "make_rng",
    "gen_periodic",
    "gen_iid",
    "gen_tensor",
    "gen_planted",
    "gen_domino",
    "analyze_geometry",
    "estimate_block_size",
    "save_field",
    "load_field",
]


def make_rng(seed):
    """Counter-based generator (Philox) keyed by an explicit integer seed."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class GridSpec:
    """Cell grid of the unit torus: inv_eps cells per axis, side eps."""

    d: int
    inv_eps: int
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.d > 3:
            raise ValueError("d must be 1, 2 or 3, got %r" % (self.d,))
        if self.inv_eps < 2:
            raise ValueError("inv_eps must be at least 2, got %r" % (self.inv_eps,))

    @property
    def eps(self):
        return 1.0 / self.inv_eps

    @property
    def shape(self):
        return (self.inv_eps,) * self.d

    @property
    def n_cells(self):
        return self.inv_eps ** self.d


@dataclass
class PotentialField:
    """Piecewise constant potential: beta on occupancy==True cells, else alpha.

    factors (tensor/periodic kinds) stores the d Bernoulli factor rows with
    1 marking the alpha-contributing value; blocks (domino kind) stores the
    tiling as (anchor, level, long_axis, alpha_low) tuples. Both are enough
    to recover the valley decomposition exactly.
    """

    grid: GridSpec
    occupancy: np.ndarray
    alpha: float
    beta: float
    kind: str
    factors: list | None = None
    blocks: list | None = None

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if self.occupancy.shape != self.grid.shape:
            raise ValueError(
                "occupancy shape %s does not match grid shape %s"
                % (self.occupancy.shape, self.grid.shape)
            )
        if not (0 <= self.alpha < self.beta):
            raise ValueError(
                "need 0 <= alpha < beta, got alpha=%r beta=%r" % (self.alpha, self.beta)
            )

    def values(self):
        """Per-cell potential values as a float array."""
        return np.where(self.occupancy, self.beta, self.alpha)

    @property
    def n_beta(self):
        return int(self.occupancy.sum())

    @property
    def n_alpha(self):
        return int(self.occupancy.size - self.occupancy.sum())


@dataclass(frozen=True)
class Valley:
    """Rectangular alpha component: cell anchor (min corner) and sides in cells."""

    anchor: tuple
    sides: tuple

    @property
    def min_side(self):
        return min(self.sides)

    @property
    def max_side(self):
        return max(self.sides)


@dataclass
class GeometryStats:
    """Geometry summary of the alpha region.

    maximal_cubes lists (anchor, side) in cell units for every alpha-cube not
    contained in a bigger one; max_width is the largest such side (1 when the
    alpha region is empty); cube_overlap is the largest number of maximal
    cubes covering a single cell. valleys / width_counts / anisotropy are
    only available when the field carries enough structure to define a
    rectangular valley decomposition (d=1, tensor, periodic, domino).
    """

    d: int
    maximal_cubes: list
    max_width: int
    cube_overlap: int
    valleys: list | None = None
    width_counts: dict | None = None
    anisotropy: dict | None = None


# ---------------------------------------------------------------------------
# generators


def gen_periodic(grid: GridSpec, alpha: float, beta: float) -> PotentialField:
    """Reference periodic pattern: alpha exactly on cells with all-odd indices.

    Needs an even inv_eps so the pattern closes around the torus.
    """
    if grid.inv_eps % 2 != 0:
        raise ValueError(
            "periodic pattern needs even inv_eps, got %d" % grid.inv_eps
        )
    factors = [(np.arange(grid.inv_eps) % 2 == 1) for _ in range(grid.d)]
    return _field_from_factors(grid, factors, alpha, beta, kind="periodic")


def gen_iid(grid: GridSpec, alpha: float, beta: float, p_beta: float) -> PotentialField:
    """Independent Bernoulli(p_beta) barrier cells."""
    if not 0.0 <= p_beta <= 1.0:
        raise ValueError("p_beta must lie in [0,1], got %r" % (p_beta,))
    rng = make_rng(grid.seed)
    occ = rng.random(grid.shape) < p_beta
    return PotentialField(grid, occ, alpha, beta, kind="iid")


def gen_tensor(grid: GridSpec, alpha: float, beta: float, p_alpha: float) -> PotentialField:
    """Product field: cell is alpha iff all d factor rows are 1 there.

    Each factor row is an independent Bernoulli(p_alpha) sample of length
    inv_eps, so the alpha region is a union of boxes (products of factor
    runs), each flanked by beta in every axis where its factor flips.
    """
    if not 0.0 <= p_alpha <= 1.0:
        raise ValueError("p_alpha must lie in [0,1], got %r" % (p_alpha,))
    rng = make_rng(grid.seed)
    factors = [rng.random(grid.inv_eps) < p_alpha for _ in range(grid.d)]
    return _field_from_factors(grid, factors, alpha, beta, kind="tensor")


def gen_planted(grid: GridSpec, alpha: float, beta: float, widths) -> PotentialField:
    """Deterministic tensor field with prescribed valley widths (in cells).

    The same factor row is used along every axis: runs of the given widths,
    separated by beta gaps spread as evenly as possible. With a single width
    w this plants one w-cube valley; in d=1 this plants len(widths) separate
    intervals. Useful as a controlled test fixture.
    """
    widths = [int(w) for w in widths]
    if not widths or any(w < 1 for w in widths):
        raise ValueError("widths must be positive integers")
    need = sum(widths) + len(widths)
    if need > grid.inv_eps:
        raise ValueError(
            "widths %r plus separating gaps do not fit in %d cells"
            % (widths, grid.inv_eps)
        )
    row = np.zeros(grid.inv_eps, dtype=bool)
    spare = grid.inv_eps - sum(widths) - len(widths)
    gap = 1 + spare // len(widths)
    pos = 0
    for w in widths:
        row[pos : pos + w] = True
        pos += w + gap
    factors = [row.copy() for _ in range(grid.d)]
    return _field_from_factors(grid, factors, alpha, beta, kind="tensor")


def _field_from_factors(grid, factors, alpha, beta, kind):
    prod = factors[0].astype(bool)
    for f in factors[1:]:
        prod = np.multiply.outer(prod, f.astype(bool))
    occ = ~prod
    return PotentialField(
        grid, occ, alpha, beta, kind=kind, factors=[np.asarray(f, bool) for f in factors]
    )


def gen_domino(
    grid: GridSpec,
    alpha: float,
    beta: float,
    level_decay: float = 0.5,
    max_level: int = 4,
    retries: int = 32,
) -> PotentialField:
    """Random exact tiling of the torus by j-blocks.

    A j-block is a box of extent 2j along one axis and j along the others,
    split across the long axis into an alpha j-cube and a beta j-cube. The
    level j is geometric with ratio level_decay (tail mass lumped at
    max_level, and level_decay=1 forces every block to max_level), the long
    axis and the alpha half are uniform. Blocks are laid down in scanline
    order, shrinking the level only when the sampled block does not fit, so
    on a large grid the realized level histogram matches the sampling law.
    In d>=2 a dead end triggers a bounded number of retries before falling
    back to a deterministic 1-block tiling.
    """
    n = grid.inv_eps
    if n % 2 != 0:
        raise ValueError(
            "domino tiling needs even inv_eps (block volumes are even), got %d" % n
        )
    if not 0.0 < level_decay <= 1.0:
        raise ValueError("level_decay must lie in (0,1], got %r" % (level_decay,))
    if max_level < 1 or 2 * max_level > n:
        raise ValueError("max_level must satisfy 1 <= max_level <= inv_eps/2")
    rng = make_rng(grid.seed)
    blocks = None
    for _ in range(retries):
        blocks = _try_domino_tiling(grid, rng, level_decay, max_level)
        if blocks is not None:
            break
    if blocks is None:
        blocks = _fallback_pair_tiling(grid, rng)
    occ = np.ones(grid.shape, dtype=bool)
    for anchor, level, axis, alpha_low in blocks:
        a = list(anchor)
        if not alpha_low:
            a[axis] = (a[axis] + level) % n
        occ[_box_index(grid, tuple(a), level, axis, long=False)] = False
    return PotentialField(grid, occ, alpha, beta, kind="domino", blocks=blocks)


def _box_index(grid, anchor, level, axis, long):
    n = grid.inv_eps
    ranges = []
    for a in range(grid.d):
        extent = 2 * level if (long and a == axis) else level
        ranges.append((anchor[a] + np.arange(extent)) % n)
    return np.ix_(*ranges)


def _sample_level(rng, level_decay, max_level):
    j = 1
    while j < max_level and rng.random() < level_decay:
        j += 1
    return j


def _try_domino_tiling(grid, rng, level_decay, max_level):
    """Scanline placement: always anchor at the first uncovered cell.

    Anchoring at the lexicographically first hole keeps the covered region
    compact, so the sampled level survives unshrunk almost always and the
    realized level histogram tracks the geometric target. In 1D the cursor
    advances by the even amount 2j, so every anchor is automatically even
    and only the final block can be forced smaller.
    """
    d = grid.d
    uncovered = np.ones(grid.shape, dtype=bool)
    blocks = []
    while True:
        flat = np.flatnonzero(uncovered.ravel())
        if len(flat) == 0:
            return blocks
        anchor = np.unravel_index(flat[0], grid.shape)
        j = _sample_level(rng, level_decay, max_level)
        axes = rng.permutation(d)
        placed = False
        for jj in range(j, 0, -1):
            for axis in axes:
                idx = _box_index(grid, anchor, jj, int(axis), long=True)
                if uncovered[idx].all():
                    uncovered[idx] = False
                    blocks.append(
                        (tuple(int(c) for c in anchor), jj, int(axis), bool(rng.random() < 0.5))
                    )
                    placed = True
                    break
            if placed:
                break
        if not placed:
            return None
    return blocks


def _fallback_pair_tiling(grid, rng):
    n = grid.inv_eps
    blocks = []
    anchors = [r for r in itertools.product(*[range(0, n, 2)] + [range(n)] * (grid.d - 1))]
    for anchor in anchors:
        blocks.append((anchor, 1, 0, bool(rng.random() < 0.5)))
    return blocks


# ---------------------------------------------------------------------------
# geometry analysis


def _windowed_and(arr, width, axis):
    out = arr.copy()
    for s in range(1, width):
        out &= np.roll(arr, -s, axis=axis)
    return out


def _anchored_cubes(alpha_mask, side):
    """Cells that anchor (as min corner, torus wrap allowed) an alpha cube."""
    out = alpha_mask
    for axis in range(alpha_mask.ndim):
        out = _windowed_and(out, side, axis)
    return out


def analyze_geometry(field: PotentialField) -> GeometryStats:
    """Maximal alpha-cubes, their overlap, and the valley decomposition.

    Maximal cubes are found by erosion at increasing side lengths; a cube is
    maximal when no side+1 cube anchored within one cell step contains it.
    The overlap count is the maximum number of maximal cubes covering any
    single cell (1 in d=1 and for the periodic pattern). Valleys are exact
    boxes: factor runs for tensor-structured fields, alpha halves of the
    blocks for domino fields, plain alpha runs in d=1.
    """
    grid = field.grid
    alpha_mask = ~field.occupancy
    n = grid.inv_eps

    cubes = []
    if alpha_mask.any():
        anchored = {1: _anchored_cubes(alpha_mask, 1)}
        side = 1
        while side < n and anchored[side].any():
            anchored[side + 1] = _anchored_cubes(alpha_mask, side + 1)
            side += 1
        max_side = max(s for s in anchored if anchored[s].any())
        if max_side == n:
            cubes.append(((0,) * grid.d, n))
        else:
            for s in range(max_side, 0, -1):
                anchors = np.argwhere(anchored[s])
                bigger = anchored.get(s + 1)
                for c in anchors:
                    contained = False
                    if bigger is not None:
                        for delta in itertools.product((0, 1), repeat=grid.d):
                            if bigger[tuple((c - delta) % n)]:
                                contained = True
                                break
                    if not contained:
                        cubes.append((tuple(int(x) for x in c), s))
        cubes.sort(key=lambda cs: (-cs[1], cs[0]))
        max_width = max(s for _, s in cubes)
        cover = np.zeros(grid.shape, dtype=np.int64)
        for anchor, s in cubes:
            cover[_box_index(grid, anchor, s, 0, long=False)] += 1
        overlap = int(cover.max())
    else:
        max_width = 1
        overlap = 0

    valleys = _valley_decomposition(field)
    width_counts = None
    anisotropy = None
    if valleys is not None:
        width_counts = {}
        for v in valleys:
            width_counts[v.min_side] = width_counts.get(v.min_side, 0) + 1
        anisotropy = {}
        if valleys:
            for ell in range(1, max(v.min_side for v in valleys) + 1):
                wide = [v for v in valleys if v.min_side >= ell]
                anisotropy[ell] = max(v.max_side / v.min_side for v in wide)

    return GeometryStats(
        d=grid.d,
        maximal_cubes=cubes,
        max_width=max_width,
        cube_overlap=overlap,
        valleys=valleys,
        width_counts=width_counts,
        anisotropy=anisotropy,
    )


def _torus_runs(row):
    """Maximal circular runs of True in a 1D bool array as (start, length)."""
    n = len(row)
    if row.all():
        return [(0, n)]
    if not row.any():
        return []
    starts = np.flatnonzero(row & ~np.roll(row, 1))
    runs = []
    for s in starts:
        length = 1
        while row[(s + length) % n]:
            length += 1
        runs.append((int(s), length))
    return runs


def _valley_decomposition(field):
    grid = field.grid
    if field.kind == "domino" and field.blocks is not None:
        valleys = []
        for anchor, level, axis, alpha_low in field.blocks:
            a = list(anchor)
            if not alpha_low:
                a[axis] = (a[axis] + level) % grid.inv_eps
            valleys.append(Valley(tuple(a), (level,) * grid.d))
        return sorted(valleys, key=lambda v: (-v.min_side, v.anchor))
    if field.factors is not None:
        axis_runs = [_torus_runs(np.asarray(f, bool)) for f in field.factors]
        if any(len(r) == 0 for r in axis_runs):
            return []
        valleys = []
        for combo in itertools.product(*axis_runs):
            anchor = tuple(int(s) for s, _ in combo)
            sides = tuple(int(w) for _, w in combo)
            valleys.append(Valley(anchor, sides))
        return sorted(valleys, key=lambda v: (-v.min_side, v.anchor))
    if grid.d == 1:
        runs = _torus_runs(~field.occupancy)
        return sorted(
            (Valley((int(s),), (int(w),)) for s, w in runs),
            key=lambda v: (-v.min_side, v.anchor),
        )
    return None


def estimate_block_size(stats: GeometryStats, ell: int) -> int:
    """Subspace budget for the block iteration at valley-width threshold ell.

    Counts, per valley wider than ell, how many width-ell boxes are needed to
    exhaust it, weighted by the anisotropy of the wide valleys:

        ceil( rho_ell^(d-1) * sum_{j > ell} N_j * floor(j/ell)^d )

    with N_j the number of valleys of minimal side j. Raises when the valley
    decomposition is missing or no valley is wider than ell.
    """
    if stats.valleys is None or stats.width_counts is None:
        raise ValueError("valley decomposition unavailable for this field")
    if not stats.valleys:
        raise ValueError("no valleys at all in this field")
    widest = max(v.min_side for v in stats.valleys)
    if ell < 1:
        raise ValueError("ell must be at least 1")
    if ell >= widest:
        raise ValueError(
            "no valley wider than ell=%d (widest minimal side is %d)" % (ell, widest)
        )
    rho = stats.anisotropy[ell]
    total = 0.0
    for j, count in stats.width_counts.items():
        if j > ell:
            total += count * (j // ell) ** stats.d
    return int(math.ceil(rho ** (stats.d - 1) * total))


# ---------------------------------------------------------------------------
# serialization


def save_field(field: PotentialField, path):
    """Write a field as JSON with the occupancy packed to hex.

    Occupancy bits are row-major (C order), most significant bit first
    within each byte (numpy packbits default), padded with zeros to a whole
    byte at the end.
    """
    packed = np.packbits(field.occupancy.ravel(order="C").astype(np.uint8))
    doc = {
        "kind": field.kind,
        "d": field.grid.d,
        "inv_eps": field.grid.inv_eps,
        "seed": field.grid.seed,
        "alpha": field.alpha,
        "beta": field.beta,
        "occupancy_hex": packed.tobytes().hex(),
    }
    if field.factors is not None:
        doc["factors"] = [[int(x) for x in f] for f in field.factors]
    if field.blocks is not None:
        doc["blocks"] = [
            [list(anchor), level, axis, bool(alpha_low)]
            for anchor, level, axis, alpha_low in field.blocks
        ]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_field(path) -> PotentialField:
    with open(path) as fh:
        doc = json.load(fh)
    grid = GridSpec(d=doc["d"], inv_eps=doc["inv_eps"], seed=doc["seed"])
    raw = np.frombuffer(bytes.fromhex(doc["occupancy_hex"]), dtype=np.uint8)
    bits = np.unpackbits(raw)[: grid.n_cells]
    occ = bits.astype(bool).reshape(grid.shape, order="C")
    factors = None
    if "factors" in doc:
        factors = [np.asarray(f, dtype=bool) for f in doc["factors"]]
    blocks = None
    if "blocks" in doc:
        blocks = [
            (tuple(anchor), int(level), int(axis), bool(alpha_low))
            for anchor, level, axis, alpha_low in doc["blocks"]
        ]
    return PotentialField(
        grid,
        occ,
        float(doc["alpha"]),
        float(doc["beta"]),
        kind=doc["kind"],
        factors=factors,
        blocks=blocks,
    )
