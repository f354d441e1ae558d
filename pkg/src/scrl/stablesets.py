"""Omega limits, strongly stable sets, complementaries, and avoider sets.

A strongly stable set here is produced constructively: take a seed ball
C, collect everything reachable from it within a closed jump budget,
and let that region flow until it settles; the settled set B together
with its complementary B_bullet (points whose omega limit misses B) is
the building block for one Lyapunov summand.  Nested neighborhoods of B
are metric thickenings U_eta = {d(., B) <= R * eta}; each certified
level carries the first time multiple after which the grid flow keeps
the thickening inside itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chaingraph import ChainGraph, omega_budget
from .flows import FlowModel, GridTransition
from .orbits import OrbitData
from .space import GridSpace


@dataclass(eq=False)
class StablePair:
    """A strongly stable set with its complementary and neighborhood data.

    ``eta0`` and ``B_star`` may be absent (None / empty) when the
    complementary is empty or no sampled level admits an avoider; the
    pair still yields a Lyapunov summand.
    """

    B: np.ndarray
    B_bullet: np.ndarray
    R: float
    eta0: float | None
    T_table: dict
    B_star: np.ndarray
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "B": [int(i) for i in self.B],
            "B_bullet": [int(i) for i in self.B_bullet],
            "R": self.R,
            "eta0": self.eta0,
            "T_table": {repr(float(k)): float(v) for k, v in sorted(self.T_table.items())},
            "B_star": [int(i) for i in self.B_star],
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StablePair":
        return cls(
            B=np.asarray(obj["B"], dtype=np.int64),
            B_bullet=np.asarray(obj["B_bullet"], dtype=np.int64),
            R=float(obj["R"]),
            eta0=None if obj["eta0"] is None else float(obj["eta0"]),
            T_table={float(k): float(v) for k, v in obj["T_table"].items()},
            B_star=np.asarray(obj["B_star"], dtype=np.int64),
            provenance=dict(obj.get("provenance", {})),
        )


def _image_cycles(tr: GridTransition) -> tuple[np.ndarray, list[np.ndarray]]:
    """Terminal cycles of the single-step image map (a functional graph).

    Returns (cycle_id per node, member arrays per cycle); cached on the
    transition since the map never changes.
    """
    cached = getattr(tr, "_cycles", None)
    if cached is not None:
        return cached
    f = tr.image
    n = f.size
    cycle_id = np.full(n, -1, dtype=np.int64)
    state = np.zeros(n, dtype=np.int8)          # 0 new, 1 on path, 2 resolved
    cycles: list[np.ndarray] = []
    for start in range(n):
        if state[start] == 2:
            continue
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = int(f[node])
        if state[node] == 1:                    # fresh cycle found on this path
            pos = path.index(node)
            members = np.asarray(sorted(path[pos:]), dtype=np.int64)
            cid = len(cycles)
            cycles.append(members)
            for p in path[pos:]:
                cycle_id[p] = cid
        tail_cid = cycle_id[node]
        for p in path:
            if cycle_id[p] == -1:
                cycle_id[p] = tail_cid
            state[p] = 2
    tr._cycles = (cycle_id, cycles)
    return tr._cycles


def omega_limit_of_set(tr: GridTransition, U) -> np.ndarray:
    """Union of the image-map cycles reachable from U.

    Iterating S to image(S) on a finite grid is eventually periodic and
    the union over one period is exactly the union of the terminal
    cycles that points of S fall into.
    """
    U = np.asarray(sorted(set(int(u) for u in U)), dtype=np.int64)
    if U.size == 0:
        raise ValueError("U must be nonempty")
    cycle_id, cycles = _image_cycles(tr)
    out: set[int] = set()
    for cid in np.unique(cycle_id[U]):
        out.update(cycles[cid].tolist())
    return np.asarray(sorted(out), dtype=np.int64)


def omega_limits_all(orbit: OrbitData, burn_frac: float = 0.5) -> tuple[list, np.ndarray]:
    """Recurring tail cells of each grid point's exact orbit.

    Follows the T-lattice cells after a burn-in, keeps cells that are
    visited at least twice, and flags points whose tails are still
    discovering new cells near the horizon (reported, not fatal).
    """
    cells = orbit.t_cells
    steps, n = cells.shape[0] - 1, cells.shape[1]
    burn = int(steps * burn_frac)
    probe = max(1, steps // 8)
    tails: list[np.ndarray] = []
    nonconv = np.zeros(n, dtype=bool)
    for p in range(n):
        tail = cells[burn:, p]
        uniq, counts = np.unique(tail, return_counts=True)
        recur = uniq[counts >= 2]
        first_seen = {}
        for i, c in enumerate(tail):
            if c not in first_seen:
                first_seen[c] = i
        if max(first_seen.values()) >= tail.size - probe:
            nonconv[p] = True
        tails.append(recur)
    return tails, nonconv


def omega_limit_of_point(orbit: OrbitData, p: int) -> tuple[np.ndarray, bool]:
    """Recurring tail cells of one point's orbit, plus a non-convergence flag."""
    tails, nonconv = _point_omega(orbit, p)
    return tails, nonconv


def _point_omega(orbit: OrbitData, p: int) -> tuple[np.ndarray, bool]:
    cells = orbit.t_cells[:, p]
    steps = cells.size - 1
    burn = steps // 2
    tail = cells[burn:]
    uniq, counts = np.unique(tail, return_counts=True)
    recur = uniq[counts >= 2]
    first = {}
    for i, c in enumerate(tail):
        if c not in first:
            first[c] = i
    flag = max(first.values()) >= tail.size - max(1, steps // 8)
    return recur, flag


def check_forward_invariant(space: GridSpace, tr: GridTransition, B) -> None:
    """Require image(B) inside the resolution thickening of B."""
    B = np.asarray(sorted(B), dtype=np.int64)
    img = np.unique(tr.image[B])
    d = space.dist_coords_to_subset(space.points[img], B)
    if np.any(d > space.resolution + 1e-9):
        worst = img[int(np.argmax(d))]
        raise ValueError(
            f"set is not forward invariant within tolerance: image point {worst} "
            f"is {d.max():.4g} from the set (resolution {space.resolution:.4g})")


def complementary(space: GridSpace, tr: GridTransition, B,
                  omega_cells: list, nonconv: np.ndarray) -> np.ndarray:
    """Points whose omega limit misses the resolution thickening of B.

    Non-convergent points are conservatively excluded (they cannot be
    certified to stay away from B).
    """
    B = np.asarray(sorted(B), dtype=np.int64)
    check_forward_invariant(space, tr, B)
    thick = set(space.thicken(B, space.resolution).tolist())
    out = []
    for p in range(space.n):
        if nonconv[p]:
            continue
        if not any(int(c) in thick for c in omega_cells[p]):
            out.append(p)
    return np.asarray(out, dtype=np.int64)


def build_strongly_stable(g: ChainGraph, tr: GridTransition, space: GridSpace,
                          C, epsilon: float) -> tuple[np.ndarray, bool, np.ndarray]:
    """Settled set of the closed-budget reachable region of a seed ball.

    Returns (B, separation_certificate, W) where W is the closed-budget
    reachability of C and the certificate records C and W disjoint.  The
    settled set is checked to lie inside the resolution thickening of W
    (grid projection can spill one cell per step; the containment is
    exact in the continuum).
    """
    C = np.asarray(sorted(set(int(c) for c in C)), dtype=np.int64)
    if C.size == 0:
        raise ValueError("seed set C must be nonempty")
    W = omega_budget(g, C, epsilon, closed=True)
    if W.size == 0:
        raise ValueError("closed-budget reachable set is empty; cannot settle")
    B = omega_limit_of_set(tr, W)
    certificate = not np.any(np.isin(C, W))
    d = space.dist_coords_to_subset(space.points[B], W)
    if np.any(d > space.resolution + 1e-9):
        raise AssertionError(
            "settled set escapes the resolution thickening of its reachable set")
    return B, certificate, W


def nested_neighborhoods(space: GridSpace, tr: GridTransition, B, R: float,
                         eta_samples, t_cap_steps: int = 200,
                         grid_orbit: np.ndarray | None = None) -> dict:
    """Certify eventual forward invariance of metric thickenings of B.

    For each eta, U_eta = {x : d(x, B) <= R * eta}; the certificate is the
    least k with image^j(U_eta) inside U_eta for every j in [k, t_cap].
    Returns {"T_table": {eta: k * T}, "failures": {eta: witness_id}}.
    """
    B = np.asarray(sorted(B), dtype=np.int64)
    if B.size == 0:
        raise ValueError("B must be nonempty")
    if R <= 0:
        raise ValueError("neighborhood scale R must be positive")
    d2B = space.dist_coords_to_subset(space.points, B)
    if grid_orbit is None:
        grid_orbit = grid_image_orbit(tr, t_cap_steps)
    T_table: dict[float, float] = {}
    failures: dict[float, int] = {}
    for eta in sorted(float(e) for e in eta_samples):
        if not 0 < eta < 1:
            raise ValueError(f"eta sample {eta} outside (0, 1)")
        inside_mask = d2B <= R * eta + 1e-12
        U = np.nonzero(inside_mask)[0]
        ok = np.array([bool(np.all(inside_mask[row[U]])) for row in grid_orbit])
        good_from = None
        for j in range(len(ok) - 1, -1, -1):
            if not ok[j]:
                break
            good_from = j
        if good_from is None:
            bad_row = grid_orbit[-1][U]
            failures[eta] = int(bad_row[~inside_mask[bad_row]][0])
        else:
            T_table[eta] = max(good_from, 1) * tr.T    # certificate times are positive
    return {"T_table": T_table, "failures": failures}


def grid_image_orbit(tr: GridTransition, steps: int) -> np.ndarray:
    """Iterates of the nearest-image map: row j maps u to image^j(u)."""
    out = np.empty((steps + 1, tr.image.size), dtype=np.int64)
    out[0] = np.arange(tr.image.size)
    for j in range(1, steps + 1):
        out[j] = tr.image[out[j - 1]]
    return out


def avoidance_profile(space: GridSpace, orbit: OrbitData, B,
                      rows: np.ndarray | None = None) -> np.ndarray:
    """Per-point minimum distance to B along the sampled exact orbit.

    Defaults to the T-lattice samples; pass ``rows`` for a finer sweep.
    """
    B = np.asarray(sorted(B), dtype=np.int64)
    if rows is None:
        rows = orbit.t_rows
    out = np.full(space.n, np.inf)
    for j in rows:
        np.minimum(out, space.dist_coords_to_subset(orbit.coords[j], B), out=out)
    return out


def find_eta0_and_bstar(space: GridSpace, B, B_bullet, T_table: dict, R: float,
                        min_orbit_dist: np.ndarray):
    """Largest certified level whose never-entering set is nonempty.

    The avoider set at level eta holds the points whose sampled orbit
    keeps distance > R * eta from B for the whole horizon; it is
    intersected with B_bullet so that finite-horizon optimism can never
    claim an avoider whose omega limit actually reaches B.  Returns
    (eta0, B_star, n_dropped) or None when the hypothesis fails.
    """
    B = np.asarray(sorted(B), dtype=np.int64)
    B_bullet = np.asarray(sorted(B_bullet), dtype=np.int64)
    if B_bullet.size == 0:
        return None
    bullet_mask = np.zeros(space.n, dtype=bool)
    bullet_mask[B_bullet] = True
    for eta in sorted(T_table, reverse=True):
        raw = min_orbit_dist > R * eta
        cand = np.nonzero(raw & bullet_mask)[0]
        if cand.size:
            dropped = int(raw.sum() - cand.size)
            if np.any(np.isin(cand, B)):
                raise AssertionError("avoider set intersects B")
            return float(eta), cand, dropped
    return None


def default_eta_samples(count: int = 32, lo: float = 0.01, hi: float = 0.99) -> np.ndarray:
    return np.geomspace(lo, hi, count)
