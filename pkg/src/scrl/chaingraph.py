"""Weighted jump-cost digraph over a grid transition.

An edge (u, v) with multiplier m and weight w records that flowing from
grid point u for time m*T and then jumping to v costs w = d(phi_{mT}(u), v).
A path through this graph whose weights sum below a budget is a strong
chain at that budget with all flow times in {T, ..., m_max*T}; cycle
costs therefore decide strong chain recurrence, per-edge thresholds plus
strong connectivity decide classical chain recurrence, and multi-source
shortest paths realize the budgeted reachability operator.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from .flows import FlowModel, GridTransition
from .space import GridSpace


@dataclass(eq=False)
class ChainGraph:
    """Immutable edge set; shortest-path results are cached lazily."""

    n: int
    T: float
    m_max: int
    prune_radius: float
    resolution: float
    edge_u: np.ndarray = field(repr=False)
    edge_v: np.ndarray = field(repr=False)
    edge_m: np.ndarray = field(repr=False)
    edge_w: np.ndarray = field(repr=False)
    _csr: sp.csr_matrix | None = field(default=None, repr=False)
    _apsp: dict = field(default_factory=dict, repr=False)

    @property
    def n_edges(self) -> int:
        return self.edge_u.size

    def csr(self) -> sp.csr_matrix:
        """Min-reduced adjacency (parallel m-edges collapse to the cheapest).

        Exact zero weights are stored as 1e-300 so the sparse format does
        not confuse them with absent edges; the offset is far below every
        tolerance in use.
        """
        if self._csr is None:
            order = np.lexsort((self.edge_w, self.edge_v, self.edge_u))
            u, v, w = self.edge_u[order], self.edge_v[order], self.edge_w[order]
            first = np.ones(u.size, dtype=bool)
            first[1:] = (u[1:] != u[:-1]) | (v[1:] != v[:-1])
            u, v, w = u[first], v[first], w[first]
            mat = sp.csr_matrix((np.maximum(w, 1e-300), (u, v)), shape=(self.n, self.n))
            self._csr = mat
        return self._csr

    def all_pairs(self, limit: float | None = None) -> np.ndarray:
        """Forward all-pairs shortest path matrix D[s, v], optionally cost-limited.

        Entries above ``limit`` come back as +inf; any cached matrix whose
        limit dominates the request is reused.
        """
        want = np.inf if limit is None else float(limit)
        for have, mat in self._apsp.items():
            if have >= want:
                return mat
        mat = dijkstra(self.csr(), directed=True, limit=want)
        self._apsp[want] = mat
        return mat


@dataclass(eq=False)
class ScrResult:
    """Strong chain recurrence at one budget."""

    epsilon: float
    min_return_cost: np.ndarray = field(repr=False)
    members: np.ndarray = field(repr=False)
    band: np.ndarray = field(repr=False)      # ids with |cost - epsilon| <= 3 res
    resolution: float = 0.0
    cost_limit: float = np.inf                # costs above this are reported as inf

    def to_json(self) -> dict:
        cost = [None if not np.isfinite(c) else float(c) for c in self.min_return_cost]
        return {
            "epsilon": self.epsilon,
            "resolution": self.resolution,
            "cost_limit": None if not np.isfinite(self.cost_limit) else self.cost_limit,
            "min_return_cost": cost,
            "members": [int(i) for i in self.members],
            "warning_band": [int(i) for i in self.band],
        }


def build_chain_graph(space: GridSpace, tr: GridTransition, flow: FlowModel,
                      prune_radius: float) -> ChainGraph:
    """Assemble all jump edges with weight at most ``prune_radius``.

    Built-in systems use the exact continuous images; sampled flows only
    know grid images, so their weights carry a + resolution padding.
    """
    if prune_radius < 3 * space.resolution:
        raise ValueError(
            f"prune_radius {prune_radius} < 3 * resolution {3 * space.resolution}; "
            "near-zero-cost continuation edges would be lost")
    us, vs, ms, ws = [], [], [], []
    base = np.arange(space.n, dtype=np.int64)
    for m in range(1, tr.m_max + 1):
        if tr.exact_images is not None:
            dmat = space.dist_coords_to_grid(tr.exact_images[m - 1], cutoff=prune_radius)
        else:
            img_pts = space.points[tr.images[m - 1]]
            dmat = space.dist_coords_to_grid(img_pts, cutoff=prune_radius)
            dmat = dmat + space.resolution
        uu, vv = np.nonzero(dmat <= prune_radius)
        us.append(base[uu])
        vs.append(vv.astype(np.int64))
        ms.append(np.full(uu.size, m, dtype=np.int64))
        ws.append(dmat[uu, vv])
    edge_u = np.concatenate(us)
    edge_v = np.concatenate(vs)
    edge_m = np.concatenate(ms)
    edge_w = np.concatenate(ws)
    order = np.lexsort((edge_v, edge_m, edge_u))
    return ChainGraph(
        n=space.n, T=tr.T, m_max=tr.m_max, prune_radius=prune_radius,
        resolution=space.resolution,
        edge_u=edge_u[order], edge_v=edge_v[order],
        edge_m=edge_m[order], edge_w=edge_w[order])


def graph_from_edges(n: int, edges, T: float = 1.0, resolution: float = 0.0,
                     prune_radius: float = np.inf) -> ChainGraph:
    """Build a ChainGraph from explicit (u, v, w) or (u, v, m, w) tuples."""
    rows = [(e[0], e[1], e[2] if len(e) == 4 else 1, e[-1]) for e in edges]
    arr = np.array(rows, dtype=float) if rows else np.empty((0, 4))
    if np.any(arr[:, 3] < 0):
        raise ValueError("edge weights must be nonnegative")
    return ChainGraph(
        n=n, T=T, m_max=int(arr[:, 2].max()) if rows else 1,
        prune_radius=prune_radius, resolution=resolution,
        edge_u=arr[:, 0].astype(np.int64), edge_v=arr[:, 1].astype(np.int64),
        edge_m=arr[:, 2].astype(np.int64), edge_w=arr[:, 3].copy())


def min_return_cost(g: ChainGraph, u: int) -> float:
    """Cheapest total weight of a cycle through u with at least one edge."""
    if not 0 <= u < g.n:
        raise IndexError(f"node {u} out of range")
    back = dijkstra(g.csr().T, directed=True, indices=[u])[0]  # sp(v -> u)
    sel = g.edge_u == u
    if not np.any(sel):
        return np.inf
    return float(np.min(g.edge_w[sel] + back[g.edge_v[sel]]))


def min_return_cost_all(g: ChainGraph, limit: float | None = None) -> np.ndarray:
    """Vector of min cycle costs; entries above ``limit`` come back +inf."""
    dist = g.all_pairs(limit)
    out = np.full(g.n, np.inf)
    vals = g.edge_w + dist[g.edge_v, g.edge_u]
    np.minimum.at(out, g.edge_u, vals)
    if limit is not None:
        out[out > limit] = np.inf
    return out


def compute_scr(g: ChainGraph, epsilon: float, cost_limit: float | None = None) -> ScrResult:
    """Strong chain recurrent members: nodes with min return cost < epsilon."""
    if epsilon <= 0:
        raise ValueError(f"epsilon {epsilon} must be positive")
    if epsilon <= 3 * g.resolution:
        warnings.warn(
            f"epsilon {epsilon} is below the discretization noise floor "
            f"3 * resolution = {3 * g.resolution:.3g}; membership is resolution-limited",
            stacklevel=2)
    elif epsilon < 10 * g.resolution:
        warnings.warn(
            f"epsilon {epsilon} < 10 * resolution {10 * g.resolution:.3g}: "
            "membership near the threshold is resolution-limited", stacklevel=2)
    if cost_limit is not None and cost_limit < epsilon + 3 * g.resolution:
        raise ValueError("cost_limit must exceed epsilon + 3 * resolution")
    cost = min_return_cost_all(g, limit=cost_limit)
    members = np.nonzero(cost < epsilon)[0]
    band = np.nonzero(np.abs(cost - epsilon) <= 3 * g.resolution)[0]
    return ScrResult(epsilon=epsilon, min_return_cost=cost, members=members,
                     band=band, resolution=g.resolution,
                     cost_limit=np.inf if cost_limit is None else cost_limit)


def compute_cr(g: ChainGraph, epsilon: float) -> np.ndarray:
    """Classical chain recurrence: per-edge budget, strongly connected parts."""
    if epsilon <= 0:
        raise ValueError(f"epsilon {epsilon} must be positive")
    keep = g.edge_w < epsilon
    u, v = g.edge_u[keep], g.edge_v[keep]
    mat = sp.csr_matrix((np.ones(u.size), (u, v)), shape=(g.n, g.n))
    n_comp, labels = connected_components(mat, directed=True, connection="strong")
    counts = np.bincount(labels, minlength=n_comp)
    qualified = counts[labels] >= 2
    qualified[u[u == v]] = True        # self-loop below budget
    return np.nonzero(qualified)[0]


def omega_budget(g: ChainGraph, Y, epsilon: float, closed: bool = False) -> np.ndarray:
    """Budgeted reachability: endpoints of chains from Y with >= 1 step.

    Every chain starts by flowing some point of Y for at least T and then
    jumping, so sources are the out-edges of Y, not Y itself.  ``closed``
    switches the strict budget to <= epsilon, the grid realization of the
    closure-in-budget variant.
    """
    Y = np.asarray(sorted(set(int(y) for y in Y)), dtype=np.int64)
    if Y.size == 0:
        raise ValueError("seed set Y must be nonempty")
    sel = np.isin(g.edge_u, Y)
    if not np.any(sel):
        return np.empty(0, dtype=np.int64)
    first_v = g.edge_v[sel]
    first_w = g.edge_w[sel]
    seed = np.full(g.n, np.inf)
    np.minimum.at(seed, first_v, first_w)
    starts = np.nonzero(np.isfinite(seed))[0]
    cached = None
    for have, mat in g._apsp.items():
        if have >= epsilon:
            cached = mat
            break
    if cached is not None:
        dist = cached[starts]
    else:
        dist = dijkstra(g.csr(), directed=True, indices=starts, limit=float(epsilon) * 1.0001)
    total = (seed[starts][:, None] + dist).min(axis=0)
    hit = total <= epsilon if closed else total < epsilon
    return np.nonzero(hit)[0]


def export_graph_csv(g: ChainGraph, path) -> None:
    """Write edges as ``u,v,m,w`` rows for debugging and oracle harnesses."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["u", "v", "m", "w"])
        for u, v, m, w in zip(g.edge_u, g.edge_v, g.edge_m, g.edge_w):
            writer.writerow([int(u), int(v), int(m), repr(float(w))])


def import_graph_csv(path, n: int, **kwargs) -> ChainGraph:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        edges = [(int(r["u"]), int(r["v"]), int(r["m"]), float(r["w"])) for r in reader]
    return graph_from_edges(n, edges, **kwargs)
