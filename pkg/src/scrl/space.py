"""Finite metric-space models of the compact domains.

Three domains are supported, each sampled on a regular cell-center grid:

* ``circle``: the circle of circumference 1 with the wrap-around
  arc-length metric.
* ``unit-square``: [0, 1]^2 with the Euclidean metric.
* ``roof``: the region under the curved height profile
  ``tau(x) = sqrt(|x - 1/2|) + (sqrt(2) - 1)/sqrt(2)`` on x in [0, 1],
  with the top edge glued to the bottom edge point by point,
  ``(x, tau(x)) ~ (x, 0)``.  Its metric is the ambient planar metric
  closed under travel through the gluing; we realize it exactly as the
  shortest-path metric of a gadget graph whose through-edges pass via a
  fixed set of seam samples.  For any sample count this construction is
  a true metric (symmetry and the triangle inequality hold exactly) and
  it converges to the continuum quotient metric as samples are refined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CIRCLE = "circle"
UNIT_SQUARE = "unit-square"
ROOF = "roof"
DOMAINS = (CIRCLE, UNIT_SQUARE, ROOF)

ROOF_RIDGE = (np.sqrt(2.0) - 1.0) / np.sqrt(2.0)

PointId = int


def roof_height(x):
    """Height of the roof profile above x, minimal at x = 1/2."""
    return np.sqrt(np.abs(np.asarray(x, dtype=float) - 0.5)) + ROOF_RIDGE


def circle_gap(a, b):
    """Wrap-around distance between circle positions (unit circumference)."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 1.0
    return np.minimum(d, 1.0 - d)


def _min_plus(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Min-plus product of (p, m) and (m, q), looping over the middle axis."""
    out = np.full((a.shape[0], b.shape[1]), np.inf)
    for k in range(a.shape[1]):
        np.minimum(out, a[:, k, None] + b[None, k, :], out=out)
    return out


def _euclid(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense (k, n) Euclidean distances via the square expansion (BLAS)."""
    sq = (a ** 2).sum(1)[:, None] + (b ** 2).sum(1)[None, :] - 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return np.sqrt(sq, out=sq)


def _fw_closure(d: np.ndarray) -> np.ndarray:
    """All-pairs shortest-path closure of a symmetric cost matrix."""
    d = d.copy()
    np.fill_diagonal(d, 0.0)
    for k in range(d.shape[0]):
        np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
    return d


class RoofSeam:
    """Precomputed tables for the glued top/bottom edge of the roof domain.

    Seam sample i stands for the identified pair of points
    (x_i, tau(x_i)) == (x_i, 0).  ``closure`` holds seam-to-seam shortest
    quotient distances, ``to_grid`` seam-to-grid-point distances.
    """

    def __init__(self, grid_points: np.ndarray, n_samples: int):
        x = np.linspace(0.0, 1.0, n_samples)
        self.x = x
        self.top = np.column_stack([x, roof_height(x)])
        self.bot = np.column_stack([x, np.zeros_like(x)])

        reps = [self.top, self.bot]
        base = np.full((n_samples, n_samples), np.inf)
        for a in reps:
            for b in reps:
                diff = a[:, None, :] - b[None, :, :]
                np.minimum(base, np.sqrt((diff ** 2).sum(-1)), out=base)
        self.closure = _fw_closure(base)

        entry = np.minimum(_euclid(self.top, grid_points),
                           _euclid(self.bot, grid_points))  # (m, n)
        self.to_grid = _min_plus(self.closure, entry)      # (m, n)
        self.to_grid_min = self.to_grid.min(axis=1)        # (m,)
        self.to_grid_argmin = self.to_grid.argmin(axis=1)  # (m,)

    def entry_costs(self, pts: np.ndarray) -> np.ndarray:
        """Euclidean cost from each query point to each seam sample, (k, m)."""
        return np.minimum(_euclid(pts, self.top), _euclid(pts, self.bot))


@dataclass(eq=False)
class GridSpace:
    """Immutable finite sampling of one of the compact domains.

    ``resolution`` bounds the distance from any domain point to its
    nearest grid point; ``pitch`` is the grid cell side length.
    """

    domain: str
    metric_kind: str
    points: np.ndarray = field(repr=False)
    resolution: float
    pitch: float
    seam: RoofSeam | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def diameter(self) -> float:
        if self.domain == CIRCLE:
            return 0.5
        if self.domain == UNIT_SQUARE:
            return float(np.sqrt(2.0))
        # Quotient metric diameter, estimated once on the grid itself.
        if not hasattr(self, "_diameter"):
            step = max(1, self.n // 400)
            sub = self.points[::step]
            self._diameter = float(self.dist_coords_to_grid(sub).max())
        return self._diameter

    # -- distances ----------------------------------------------------

    def coord_distance(self, a, b) -> float:
        """Metric distance between two coordinate tuples (not ids)."""
        a = np.asarray(a, dtype=float).reshape(1, -1)
        b = np.asarray(b, dtype=float).reshape(1, -1)
        if self.domain == CIRCLE:
            return float(circle_gap(a[0, 0], b[0, 0]))
        direct = float(np.sqrt(((a - b) ** 2).sum()))
        if self.domain == UNIT_SQUARE:
            return direct
        ea = self.seam.entry_costs(a)[0]
        eb = self.seam.entry_costs(b)[0]
        # commutative pair sum first, so d(a, b) == d(b, a) bit for bit
        through = float(((ea[:, None] + eb[None, :]) + self.seam.closure).min())
        return min(direct, through)

    def distance(self, p: PointId, q: PointId) -> float:
        """Metric distance between two grid points."""
        self._check_id(p)
        self._check_id(q)
        return self.coord_distance(self.points[p], self.points[q])

    def dist_coords_to_grid(self, pts: np.ndarray, cutoff: float | None = None,
                            chunk: int = 512) -> np.ndarray:
        """Dense (k, n) matrix of distances from query coords to all grid points.

        With a ``cutoff``, entries above it may be Euclidean overestimates
        (only values <= cutoff are guaranteed exact); this prunes the
        through-seam pass to points near the seam.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.domain == CIRCLE:
            return circle_gap(pts[:, :1], self.points[None, :, 0])
        out = np.empty((pts.shape[0], self.n))
        for lo in range(0, pts.shape[0], chunk):
            block = pts[lo:lo + chunk]
            d = _euclid(block, self.points)
            if self.domain == ROOF:
                entry = self.seam.entry_costs(block)        # (c, m)
                if cutoff is None:
                    refine = np.arange(block.shape[0])
                else:
                    refine = np.nonzero(entry.min(axis=1) <= cutoff)[0]
                if refine.size:
                    sub = d[refine]
                    e_sub = entry[refine]
                    for k in range(self.seam.x.size):
                        np.minimum(sub, e_sub[:, k, None] + self.seam.to_grid[k][None, :], out=sub)
                    d[refine] = sub
            out[lo:lo + chunk] = d
        return out

    def dist_coords_to_subset(self, pts: np.ndarray, ids) -> np.ndarray:
        """Distances from query coords to the nearest member of a point-id set."""
        ids = np.asarray(sorted(ids), dtype=int)
        if ids.size == 0:
            return np.full(np.atleast_2d(pts).shape[0], np.inf)
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.domain == CIRCLE:
            return circle_gap(pts[:, :1], self.points[None, ids, 0]).min(axis=1)
        d = _euclid(pts, self.points[ids]).min(axis=1)
        if self.domain == ROOF:
            premin = self.seam.to_grid[:, ids].min(axis=1)  # (m,)
            entry = self.seam.entry_costs(pts)              # (k, m)
            np.minimum(d, (entry + premin[None, :]).min(axis=1), out=d)
        return d

    def nearest(self, pts: np.ndarray) -> np.ndarray:
        """Grid ids of nearest points; ties break toward the lowest id.

        For the roof, the best through-seam target factorizes exactly:
        min over (seam sample i, grid g) of entry(p, i) + to_grid[i, g]
        equals min over i of entry(p, i) + to_grid_min[i].
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.domain == CIRCLE:
            d = circle_gap(pts[:, :1], self.points[None, :, 0])
            return d.argmin(axis=1)
        out = np.empty(pts.shape[0], dtype=np.int64)
        for lo in range(0, pts.shape[0], 2048):
            block = pts[lo:lo + 2048]
            d = _euclid(block, self.points)
            best = d.argmin(axis=1)
            if self.domain == ROOF:
                best_val = d[np.arange(block.shape[0]), best]
                entry = self.seam.entry_costs(block)
                via = entry + self.seam.to_grid_min[None, :]
                i_star = via.argmin(axis=1)
                via_val = via[np.arange(block.shape[0]), i_star]
                better = via_val < best_val
                best[better] = self.seam.to_grid_argmin[i_star[better]]
            out[lo:lo + 2048] = best
        return out

    def thicken(self, ids, radius: float) -> np.ndarray:
        """Sorted ids of all grid points within ``radius`` of the id set."""
        d = self.dist_coords_to_subset(self.points, ids)
        return np.nonzero(d <= radius + 1e-12)[0]

    def contains(self, pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.domain == CIRCLE:
            return np.ones(pts.shape[0], dtype=bool)
        ok = (pts[:, 0] >= -tol) & (pts[:, 0] <= 1 + tol)
        if self.domain == UNIT_SQUARE:
            return ok & (pts[:, 1] >= -tol) & (pts[:, 1] <= 1 + tol)
        return ok & (pts[:, 1] >= -tol) & (pts[:, 1] <= roof_height(pts[:, 0]) + tol)

    def _check_id(self, p: PointId) -> None:
        if not 0 <= p < self.n:
            raise IndexError(f"point id {p} out of range [0, {self.n})")


def build_grid(domain: str, n: int) -> GridSpace:
    """Build the cell-center grid for a domain.

    ``n`` is the number of points on the circle and the number of cells
    per side on the planar domains.  Rejects n < 8: coarser grids cannot
    resolve any of the built-in systems' features.
    """
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}; expected one of {DOMAINS}")
    if n < 8:
        raise ValueError(f"grid parameter n={n} too coarse; need n >= 8")

    if domain == CIRCLE:
        pts = (np.arange(n, dtype=float) / n).reshape(-1, 1)
        return GridSpace(CIRCLE, "circle-arc-length", pts, 0.5 / n, 1.0 / n)

    centers = (np.arange(n, dtype=float) + 0.5) / n
    xx, yy = np.meshgrid(centers, centers, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])

    if domain == UNIT_SQUARE:
        res = float(np.sqrt(2.0) / (2 * n))
        return GridSpace(UNIT_SQUARE, "euclidean-subset", pts, res, 1.0 / n)

    keep = pts[:, 1] < roof_height(pts[:, 0])
    pts = pts[keep]
    seam = RoofSeam(pts, n_samples=max(257, 4 * n + 1))
    space = GridSpace(ROOF, "roof-intrinsic", pts, np.nan, 1.0 / n, seam=seam)
    space.resolution = _sampled_resolution(space) * 1.05
    return space


def _sampled_resolution(space: GridSpace) -> float:
    """Max distance from a fine lattice of domain points to the grid."""
    n_sub = int(round(1.0 / space.pitch)) * 3
    centers = (np.arange(n_sub, dtype=float) + 0.5) / n_sub
    xx, yy = np.meshgrid(centers, centers, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    pts = pts[pts[:, 1] <= roof_height(pts[:, 0])]
    worst = 0.0
    for lo in range(0, pts.shape[0], 4096):
        d = space.dist_coords_to_subset(pts[lo:lo + 4096], np.arange(space.n))
        worst = max(worst, float(d.max()))
    return worst
