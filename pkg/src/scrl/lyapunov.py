"""Per-pair Lyapunov summands and their weighted combination.

For one stable pair the construction is a three-stage pipeline evaluated
on the shared orbit lattice:

* the level function ``l`` measures how deep a point sits in the nested
  neighborhoods of B, saturating at 1 once past the avoider level;
* ``k`` is the supremum of ``l`` along the forward orbit, computed as a
  suffix maximum over the sampled orbit, which makes monotonicity along
  the lattice structural rather than numerical;
* ``h`` discounts ``k`` exponentially in time.  The quadrature uses the
  exact integral of e^{-s} against a piecewise-linear interpolant of the
  sampled values, so constant-k orbits integrate exactly, plus a tail
  term bounded by e^{-S_max}.

The combined function weights the summands by powers of 1/3.  Verification
re-evaluates each summand at the flowed point by shifting along the same
lattice, which keeps the comparison free of grid-projection noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .orbits import OrbitData
from .space import GridSpace
from .stablesets import StablePair


@dataclass(eq=False)
class LyapunovField:
    """l, k, h values of one pair on the grid, with truncation metadata."""

    pair_index: int
    l_values: np.ndarray = field(repr=False)
    k_values: np.ndarray = field(repr=False)
    h_values: np.ndarray = field(repr=False)
    tail_slack: np.ndarray = field(repr=False)     # certified bound on sup beyond horizon
    certified: np.ndarray = field(repr=False)      # per-point truncation certificate
    quad_bound: np.ndarray = field(repr=False)     # advertised quadrature error bound
    k_series: np.ndarray | None = field(repr=False, default=None)
    eta0_effective: float = 1.0
    s_max: float = 20.0


@dataclass(eq=False)
class CombinedLyapunov:
    """Weighted sum of per-pair summands, H = sum h_n / 3^n."""

    H_values: np.ndarray = field(repr=False)
    n_pairs: int

    @property
    def tail_bound(self) -> float:
        return 1.5 * 3.0 ** (-self.n_pairs)


def effective_eta0(pair: StablePair) -> float:
    """Pairs without an avoider level fall back to the full scale."""
    return pair.eta0 if pair.eta0 is not None else 1.0


def level_function(pair: StablePair, space: GridSpace) -> np.ndarray:
    """l(x) = min(d(x, B) / (R * eta0), 1): 0 exactly on B, 1 past the avoider level."""
    d = space.dist_coords_to_subset(space.points, pair.B)
    return np.minimum(d / (pair.R * effective_eta0(pair)), 1.0)


def sup_along_orbit(pair: StablePair, space: GridSpace, orbit: OrbitData,
                    s_max: float = 20.0, pair_index: int = 0) -> LyapunovField:
    """Build the full summand: suffix maxima of orbit levels, then the integral.

    The per-point truncation certificate looks for a certified nested
    level eta whose neighborhood contains the whole trailing T(eta)
    window of the orbit; past the horizon such orbits cannot raise the
    supremum above eta / eta0.
    """
    eta0 = effective_eta0(pair)
    scale = pair.R * eta0
    J = orbit.times.size
    l_series = np.empty((J, space.n))
    for j in range(J):
        d = space.dist_coords_to_subset(orbit.coords[j], pair.B)
        l_series[j] = np.minimum(d / scale, 1.0)
    k_series = np.maximum.accumulate(l_series[::-1], axis=0)[::-1]

    certified = np.zeros(space.n, dtype=bool)
    tail_slack = np.ones(space.n)
    horizon = orbit.times[-1]
    for eta in sorted(pair.T_table):
        if eta > eta0 + 1e-12:
            break      # saturated levels cannot tighten the bound below 1
        need = pair.T_table[eta]
        window = orbit.times >= horizon - need - 1e-9
        inside = np.all(l_series[window] * scale <= pair.R * eta + 1e-12, axis=0)
        fresh = inside & ~certified
        if np.any(fresh):
            certified[fresh] = True
            tail_slack[fresh] = np.maximum(
                0.0, min(1.0, eta / eta0) - k_series[0][fresh])
    tail_slack[~certified] = np.maximum(0.0, 1.0 - k_series[0][~certified])

    fld = LyapunovField(
        pair_index=pair_index,
        l_values=l_series[0].copy(), k_values=k_series[0].copy(),
        h_values=np.empty(space.n), tail_slack=tail_slack, certified=certified,
        quad_bound=np.empty(space.n), k_series=k_series,
        eta0_effective=eta0, s_max=s_max)
    fld.h_values, fld.quad_bound = discounted_integral(fld, orbit)
    return fld


def discounted_integral(fld: LyapunovField, orbit: OrbitData,
                        shift_t: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Integrate e^{-s} k(phi_s(x)) over [0, S_max] plus the tail estimate.

    ``shift_t`` evaluates the integral at the flowed point phi_{shift}(x)
    using the same lattice (the sampled orbit of the flowed point is the
    shifted orbit).
    """
    times = orbit.times
    fine = np.nonzero(times <= fld.s_max + 1e-9)[0]
    if abs(times[fine[-1]] - fld.s_max) > 1e-9:
        raise ValueError("quadrature window must end exactly at S_max")
    rows = np.array([orbit.index_at(times[j] + shift_t) for j in fine])
    k = fld.k_series[rows]                      # (M, n)
    t = times[fine]
    expt = np.exp(-t)
    w0 = expt[:-1] - expt[1:]                   # exact integral of e^-s per segment
    dt = np.diff(t)
    w1 = w0 - dt * expt[1:]                     # integral of (s - t_j) e^-s
    slope_weight = w1 / dt
    seg = k[:-1] * w0[:, None] + (k[1:] - k[:-1]) * slope_weight[:, None]
    tail = np.exp(-fld.s_max) * k[-1]
    h = seg.sum(axis=0) + tail
    bound = 0.5 * dt.max() * (k[0] - np.exp(-fld.s_max) * k[-1]) + np.exp(-fld.s_max)
    return h, bound


def combine_pairs(fields: list[LyapunovField]) -> CombinedLyapunov:
    """H = sum over n of h_n / 3^n (identically zero for an empty list)."""
    if not fields:
        return CombinedLyapunov(H_values=np.zeros(0), n_pairs=0)
    H = np.zeros_like(fields[0].h_values)
    for i, fld in enumerate(fields):
        H += fld.h_values * 3.0 ** (-i)
    return CombinedLyapunov(H_values=H, n_pairs=len(fields))


def combined_at_shift(fields: list[LyapunovField], orbit: OrbitData,
                      shift_t: float) -> np.ndarray:
    """H evaluated at phi_{shift}(x) for every grid x, on the shared lattice."""
    if not fields:
        return np.zeros(0)
    out = np.zeros_like(fields[0].h_values)
    for i, fld in enumerate(fields):
        h_shift, _ = discounted_integral(fld, orbit, shift_t=shift_t)
        out += h_shift * 3.0 ** (-i)
    return out


def verify_lyapunov(fields: list[LyapunovField], pairs: list[StablePair],
                    space: GridSpace, orbit: OrbitData, scr, t_probe: float,
                    margin: float, tol_num: float = 1e-6) -> dict:
    """Check monotonicity everywhere and strict decrease off the recurrent set.

    Returns a report dict; verification never raises on property failures.
    """
    if t_probe < orbit.T:
        raise ValueError(f"t_probe {t_probe} must be at least T = {orbit.T}")
    n = space.n
    if not fields:
        H0 = np.zeros(n)
        Ht = np.zeros(n)
    else:
        H0 = combine_pairs(fields).H_values
        Ht = combined_at_shift(fields, orbit, t_probe)

    mono_bad = np.nonzero(Ht > H0 + tol_num)[0]

    member_mask = np.zeros(n, dtype=bool)
    member_mask[scr.members] = True
    excluded = member_mask.copy()
    excluded[scr.band] = True
    if scr.members.size:
        collar = space.thicken(scr.members, 3 * space.resolution)
        excluded[collar] = True
    universe = np.nonzero(~excluded)[0]

    decrease = H0 - Ht
    strict_bad = universe[decrease[universe] < margin]

    near_boundary = np.zeros(n, dtype=bool)
    for pair in pairs:
        union = np.union1d(pair.B, pair.B_bullet)
        if union.size == 0 or union.size == n:
            continue
        comp = np.setdiff1d(np.arange(n), union)
        d_in = space.dist_coords_to_subset(space.points, union)
        d_out = space.dist_coords_to_subset(space.points, comp)
        near_boundary |= (d_in <= 3 * space.pitch) & (d_out <= 3 * space.pitch)

    strict_off_boundary = [int(i) for i in strict_bad if not near_boundary[i]]
    n_universe = max(1, universe.size)
    return {
        "t_probe": t_probe,
        "margin": margin,
        "tol_num": tol_num,
        "n_points": n,
        "n_pairs": len(fields),
        "monotonicity_violations": [int(i) for i in mono_bad],
        "n_strict_universe": int(universe.size),
        "strict_failures": [int(i) for i in strict_bad],
        "strict_failures_off_boundary": strict_off_boundary,
        "strict_pass_fraction": float(1.0 - len(strict_bad) / n_universe),
        "max_increase": float(np.max(Ht - H0)) if n else 0.0,
        "median_decrease_universe": float(np.median(decrease[universe])) if universe.size else 0.0,
    }
