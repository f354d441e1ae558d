"""Enumeration of candidate stable pairs and greedy cover selection.

Seeds are grid points outside the computed recurrent set (a separating
ball can only exist around such points).  Each seed and radius yields a
candidate via the closed-budget reachability construction; candidates
without a separation certificate are dropped, survivors are deduplicated
on the one-cell closure of B union B_bullet, and a greedy cover then
picks a small subcollection whose joint exclusions account for every
non-recurrent grid point, reporting the residual when they cannot.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .chaingraph import ChainGraph, ScrResult
from .flows import GridTransition
from .orbits import OrbitData
from .space import GridSpace
from .stablesets import (StablePair, avoidance_profile, build_strongly_stable,
                         complementary, find_eta0_and_bstar, grid_image_orbit,
                         nested_neighborhoods, omega_limits_all)


@dataclass(eq=False)
class PairCatalog:
    pairs: list[StablePair] = field(default_factory=list)
    dedupe_keys: list[str] = field(default_factory=list)
    selected: list[int] = field(default_factory=list)
    residual: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def to_json(self) -> dict:
        return {
            "pairs": [p.to_json() for p in self.pairs],
            "dedupe_keys": list(self.dedupe_keys),
            "selected": [int(i) for i in self.selected],
            "residual": [int(i) for i in self.residual],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PairCatalog":
        return cls(
            pairs=[StablePair.from_json(p) for p in obj["pairs"]],
            dedupe_keys=list(obj["dedupe_keys"]),
            selected=[int(i) for i in obj["selected"]],
            residual=np.asarray(obj["residual"], dtype=np.int64),
        )


def default_radii(resolution: float) -> list[float]:
    return [2 * resolution, 4 * resolution, 8 * resolution]


def default_seed_stride(n: int) -> int:
    return 1 if n <= 1000 else 4


def _signature(space: GridSpace, B, B_bullet) -> str:
    union = np.union1d(B, B_bullet)
    closed = space.thicken(union, space.pitch)
    return hashlib.sha1(closed.astype(np.int64).tobytes()).hexdigest()


def enumerate_pairs(g: ChainGraph, tr: GridTransition, space: GridSpace,
                    epsilon: float, radii, seed_stride: int, scr: ScrResult,
                    orbit: OrbitData, R: float, eta_samples,
                    t_cap_steps: int = 200) -> PairCatalog:
    """Seed balls around non-recurrent points; keep certified, unique pairs."""
    if not radii:
        raise ValueError("radii must be nonempty")
    radii = sorted(float(r) for r in radii)
    if radii[0] < 2 * space.resolution:
        raise ValueError(f"smallest radius {radii[0]} below 2 * resolution")

    member_mask = np.zeros(space.n, dtype=bool)
    member_mask[scr.members] = True
    seeds = np.nonzero(~member_mask)[0][::seed_stride]

    omega_cells, nonconv = omega_limits_all(orbit)
    grid_orbit = grid_image_orbit(tr, t_cap_steps)

    catalog = PairCatalog()
    seen: dict[str, int] = {}
    seen_B: set[str] = set()
    for radius in radii:
        for seed in seeds:
            d = space.dist_coords_to_subset(space.points, [seed])
            C = np.nonzero(d <= radius + 1e-12)[0]
            try:
                B, certificate, W = build_strongly_stable(g, tr, space, C, epsilon)
            except ValueError:
                continue
            if not certificate:
                continue
            b_key = hashlib.sha1(B.astype(np.int64).tobytes()).hexdigest()
            if b_key in seen_B:
                continue          # same settled set, same pair
            seen_B.add(b_key)
            try:
                B_bullet = complementary(space, tr, B, omega_cells, nonconv)
            except ValueError:
                continue          # settled set not invariant at tolerance
            key = _signature(space, B, B_bullet)
            if key in seen:
                continue
            nn = nested_neighborhoods(space, tr, B, R, eta_samples,
                                      t_cap_steps, grid_orbit=grid_orbit)
            if nn["failures"]:
                continue          # not strongly stable at the sampled levels
            prof = avoidance_profile(space, orbit, B)
            found = find_eta0_and_bstar(space, B, B_bullet, nn["T_table"], R, prof)
            if found is None:
                eta0, B_star = None, np.empty(0, dtype=np.int64)
            else:
                eta0, B_star, _ = found
            pair = StablePair(
                B=B, B_bullet=B_bullet, R=R, eta0=eta0,
                T_table=nn["T_table"], B_star=B_star,
                provenance={"center": int(seed), "radius": radius,
                            "epsilon": epsilon, "T": tr.T})
            seen[key] = len(catalog.pairs)
            catalog.pairs.append(pair)
            catalog.dedupe_keys.append(key)
    return catalog


def select_cover(catalog: PairCatalog, scr: ScrResult, space: GridSpace) -> PairCatalog:
    """Greedy cover of the non-recurrent points by pair exclusions.

    A pair excludes the points outside the one-cell closure of B union
    B_bullet.  Selection stops when every non-recurrent point outside
    the warning band is excluded by some selected pair; leftovers are
    reported as the residual.  Ties break toward the lower pair index.
    """
    member_mask = np.zeros(space.n, dtype=bool)
    member_mask[scr.members] = True
    member_mask[scr.band] = True
    if scr.members.size:
        member_mask[space.thicken(scr.members, 3 * space.resolution)] = True
    universe = set(np.nonzero(~member_mask)[0].tolist())

    exclusions = []
    for pair in catalog.pairs:
        union = np.union1d(pair.B, pair.B_bullet)
        closed = set(space.thicken(union, space.pitch).tolist())
        exclusions.append(frozenset(i for i in universe if i not in closed))

    selected: list[int] = []
    remaining = set(universe)
    while remaining:
        best, best_gain = None, 0
        for i, excl in enumerate(exclusions):
            if i in selected:
                continue
            gain = len(remaining & excl)
            if gain > best_gain:
                best, best_gain = i, gain
        if best is None:
            break
        selected.append(best)
        remaining -= exclusions[best]

    catalog.selected = selected
    catalog.residual = np.asarray(sorted(remaining), dtype=np.int64)
    return catalog
