"""Exact forward-time evaluators for the built-in systems.

The built-in systems are specified by their phase portraits; the concrete
speed profiles below are one smooth realization each, chosen so that
every trajectory can be evaluated in closed form (no ODE stepping):

* ``circle``: positions live on the circle of circumference 1, clockwise
  means increasing position.  The closed arc from marker A through E to
  B is fixed, and so are the two isolated markers C and D.  Elsewhere the
  angular speed equals the distance to the fixed set (clamped to 1), so
  each wandering arc is a pair of exponential phases glued at its
  midpoint: repelled from the trailing fixed point, attracted to the
  leading one.

* ``square``: the unit square with the horizontal edges y=0 and y=1
  fixed; on each vertical fiber the flow runs south with dy/dt =
  -y(1-y), the logistic profile, solved exactly in the odds variable
  z = y/(1-y).

* ``roof``: the glued domain of :mod:`scrl.space`.  Vertical speed is 1
  everywhere, and a trajectory that reaches the top curve re-enters at
  the identified bottom point, so the central strip |x - 1/2| <= 0.1 is
  a band of periodic columns whose period is the local roof height.  The
  square-root crease of the roof at x = 1/2 gives nearby columns wildly
  different periods, which is what destroys uniform-in-time Lipschitz
  continuity of this flow.  Outside the strip there is a horizontal
  drift toward the strip with speed min(5 * gap, 1/2), so outer
  trajectories wind inward onto the strip's boundary column.

* ``identity``: every point fixed, on the circle domain.

All evaluators are pure, vectorized over points, and reject negative
times (the theory only ever flows forward).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .space import CIRCLE, ROOF, UNIT_SQUARE, GridSpace, circle_gap, roof_height

CIRCLE_MARKERS = {"B": 0.0, "C": 0.375, "D": 0.625, "A": 0.875, "E": 0.9375}

ROOF_STRIP_HALF_WIDTH = 0.1
ROOF_DRIFT_RATE = 5.0
ROOF_DRIFT_CAP = 0.5

SYSTEMS = ("circle", "square", "roof", "identity", "custom-sampled")


@dataclass(eq=False)
class FlowModel:
    """A forward-time system: domain name, parameters, and an evaluator."""

    kind: str
    domain: str
    params: dict = field(default_factory=dict)

    def evaluate(self, pts: np.ndarray, t: float) -> np.ndarray:
        """phi_t applied to an array of points, t >= 0."""
        if t < 0:
            raise ValueError(f"negative flow time t={t}; this is a semiflow")
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind == "identity":
            return pts.copy()
        if self.kind == "circle-arc":
            return _circle_flow(pts, t, self.params)
        if self.kind == "north-south-square":
            return _square_flow(pts, t)
        if self.kind == "roof":
            return _roof_flow(pts, t)
        raise ValueError(f"flow kind {self.kind!r} has no continuous evaluator")

    @property
    def has_evaluator(self) -> bool:
        return self.kind != "custom-sampled"

    def describe(self) -> dict:
        """Speed-profile metadata recorded with every run."""
        base = {"kind": self.kind, "domain": self.domain, "params": dict(self.params)}
        profiles = {
            "circle-arc": "angular speed = min(dist to fixed set, 1), closed-form exponentials",
            "north-south-square": "fiber dynamics dy/dt = -y(1-y), closed-form logistic",
            "roof": ("dy/dt = 1 with roof-to-floor wrap; horizontal drift toward the "
                     f"periodic strip |x-1/2| <= {ROOF_STRIP_HALF_WIDTH} at speed "
                     f"min({ROOF_DRIFT_RATE} * gap, {ROOF_DRIFT_CAP})"),
            "identity": "every point fixed",
            "custom-sampled": "grid-projected images ingested from CSV",
        }
        base["profile"] = profiles[self.kind]
        return base


def make_flow(system: str, params: dict | None = None) -> FlowModel:
    """Factory for the built-in systems."""
    if system == "circle":
        markers = dict(CIRCLE_MARKERS)
        if params:
            markers.update(params)
        _validate_markers(markers)
        return FlowModel("circle-arc", CIRCLE, markers)
    if system == "square":
        return FlowModel("north-south-square", UNIT_SQUARE)
    if system == "roof":
        return FlowModel("roof", ROOF)
    if system == "identity":
        return FlowModel("identity", CIRCLE)
    raise ValueError(f"unknown system {system!r}; expected one of {SYSTEMS[:-1]}")


def flow_map(flow: FlowModel, x, t: float):
    """phi_t(x) for a single point; validates domain membership."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if flow.domain == CIRCLE:
        x = x % 1.0
    elif flow.domain == UNIT_SQUARE:
        if not ((0 <= x[0, 0] <= 1) and (0 <= x[0, 1] <= 1)):
            raise ValueError(f"point {tuple(x[0])} outside the unit square")
    elif flow.domain == ROOF:
        tau = float(roof_height(x[0, 0]))
        if not (0 <= x[0, 0] <= 1) or x[0, 1] < 0 or x[0, 1] > tau + 1e-12:
            raise ValueError(f"point {tuple(x[0])} outside the roof domain")
        if x[0, 1] >= tau:           # identified with the floor
            x[0, 1] = 0.0
    out = flow.evaluate(x, t)[0]
    return float(out[0]) if out.size == 1 else tuple(float(v) for v in out)


# -- circle ------------------------------------------------------------


def _validate_markers(m: dict) -> None:
    order = [m["B"], m["C"], m["D"], m["A"], m["E"]]
    if not all(0 <= v < 1 for v in order):
        raise ValueError("circle markers must lie in [0, 1)")
    gaps = np.diff(order)
    if not np.all(gaps > 0):
        raise ValueError("circle markers must be ordered B < C < D < A < E clockwise")


def circle_fixed_distance(theta, markers: dict):
    """Distance from circle positions to the fixed set (arc AE..B, C, D)."""
    theta = np.asarray(theta, dtype=float) % 1.0
    b, c, d, a = markers["B"], markers["C"], markers["D"], markers["A"]
    in_arc = (theta >= a) | (theta <= b)   # closed arc from A through E to B
    dist = np.minimum.reduce([
        circle_gap(theta, a), circle_gap(theta, b),
        circle_gap(theta, c), circle_gap(theta, d),
    ])
    return np.where(in_arc, 0.0, dist)


def _wander_phase(u: np.ndarray, length: float, t: float) -> np.ndarray:
    """Advance positions u in (0, length) under du/dt = min(u, length - u).

    Exponential repulsion from 0 to the midpoint, then exponential
    attraction into length; fixed endpoints stay put.
    """
    mid = 0.5 * length
    out = u.copy()
    lower = (u > 0) & (u < mid)
    if np.any(lower):
        grown = u[lower] * np.exp(min(t, 700.0))
        done = grown <= mid
        # remaining time after hitting the midpoint
        t_rest = np.maximum(t - np.log(mid / u[lower]), 0.0)
        approach = length - mid * np.exp(-t_rest)
        out[lower] = np.where(done, grown, approach)
    upper = (u >= mid) & (u < length)
    if np.any(upper):
        out[upper] = length - (length - u[upper]) * np.exp(-t)
    return out


def _circle_flow(pts: np.ndarray, t: float, markers: dict) -> np.ndarray:
    theta = pts[:, 0] % 1.0
    b, c, d, a = markers["B"], markers["C"], markers["D"], markers["A"]
    out = theta.copy()
    # wandering arcs between consecutive fixed features, clockwise
    for lo, hi in ((b, c), (c, d), (d, a)):
        sel = (theta > lo) & (theta < hi)
        if np.any(sel):
            out[sel] = lo + _wander_phase(theta[sel] - lo, hi - lo, t)
    return (out % 1.0).reshape(-1, 1)


# -- square ------------------------------------------------------------


def _square_flow(pts: np.ndarray, t: float) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    if np.any((x < -1e-12) | (x > 1 + 1e-12) | (y < -1e-12) | (y > 1 + 1e-12)):
        raise ValueError("point outside the unit square")
    out_y = np.empty_like(y)
    interior = (y > 0) & (y < 1)
    out_y[~interior] = y[~interior]
    if np.any(interior):
        yi = y[interior]
        z = yi / (1.0 - yi) * np.exp(-t)
        out_y[interior] = z / (1.0 + z)
    return np.column_stack([x, out_y])


# -- roof --------------------------------------------------------------


def _roof_x_at(x0: np.ndarray, t) -> np.ndarray:
    """Horizontal drift toward the periodic strip, in closed form.

    Gap to the strip decays linearly at speed 1/2 while above 0.1, then
    exponentially at rate 5 (the two regimes match at gap 0.1).
    """
    s = np.sign(x0 - 0.5)
    r0 = np.maximum(np.abs(x0 - 0.5) - ROOF_STRIP_HALF_WIDTH, 0.0)
    t = np.asarray(t, dtype=float)
    knee = ROOF_DRIFT_CAP / ROOF_DRIFT_RATE          # gap where regimes meet
    t_lin = np.maximum(r0 - knee, 0.0) / ROOF_DRIFT_CAP
    lin = r0 - ROOF_DRIFT_CAP * np.minimum(t, t_lin)
    r = np.where(t <= t_lin, lin,
                 np.minimum(r0, knee) * np.exp(-ROOF_DRIFT_RATE * (t - t_lin)))
    return 0.5 + s * (ROOF_STRIP_HALF_WIDTH + r) * (r0 > 0) \
        + s * np.abs(x0 - 0.5) * (r0 == 0)


def _roof_flow(pts: np.ndarray, t: float) -> np.ndarray:
    x0, y0 = pts[:, 0].copy(), pts[:, 1].copy()
    tau0 = roof_height(x0)
    if np.any((x0 < -1e-12) | (x0 > 1 + 1e-12) | (y0 < -1e-12) | (y0 > tau0 + 1e-9)):
        raise ValueError("point outside the roof domain")
    on_roof = y0 >= tau0
    y0[on_roof] = 0.0                                  # identified points

    in_strip = np.abs(x0 - 0.5) <= ROOF_STRIP_HALF_WIDTH
    out_x = np.where(in_strip, x0, _roof_x_at(x0, t))
    out_y = np.empty_like(y0)
    if np.any(in_strip):
        out_y[in_strip] = (y0[in_strip] + t) % tau0[in_strip]

    idx = np.nonzero(~in_strip)[0]
    if idx.size:
        out_y[idx] = _roof_outer_y(x0[idx], y0[idx], t)
    return np.column_stack([out_x, out_y])


def _roof_outer_y(x0: np.ndarray, y0: np.ndarray, t: float) -> np.ndarray:
    """Vertical coordinate after time t for drifting points, with wraps.

    The wrap condition y0 + s == tau(x(s)) is solved by bisection; it has
    a unique root because d/ds of the left side is 1 while the roof height
    along the drift changes at rate at most |tau'| * |dx/dt| < 0.8.
    """
    s_cur = np.zeros_like(y0)
    y_cur = y0.copy()
    for _ in range(int(np.ceil(t / ROOF_RIDGE_MIN)) + 2):
        gap = y_cur + (t - s_cur) - roof_height(_roof_x_at(x0, t))
        active = gap >= 0
        if not np.any(active):
            break
        lo = s_cur[active].copy()
        hi = np.full(lo.shape, float(t))
        xa, ya, sa = x0[active], y_cur[active], s_cur[active]
        for _ in range(52):
            mid = 0.5 * (lo + hi)
            g = ya + (mid - sa) - roof_height(_roof_x_at(xa, mid))
            hi = np.where(g >= 0, mid, hi)
            lo = np.where(g >= 0, lo, mid)
        s_cur[active] = hi
        y_cur[active] = 0.0
    return np.clip(y_cur + (t - s_cur), 0.0, None)


ROOF_RIDGE_MIN = float(roof_height(0.5))


# -- grid transitions --------------------------------------------------


@dataclass(eq=False)
class GridTransition:
    """Grid-projected images of phi_{mT} for m = 1..m_max.

    ``exact_images[m-1]`` holds the continuous images for built-in
    systems (None for sampled flows); downstream jump costs are derived
    from these, so projection error is never hidden.
    """

    T: float
    m_max: int
    images: np.ndarray = field(repr=False)          # (m_max, n) int
    exact_images: np.ndarray | None = field(repr=False, default=None)

    @property
    def image(self) -> np.ndarray:
        """Single-step nearest-image map (m = 1)."""
        return self.images[0]

    @property
    def multi_images(self) -> np.ndarray:
        return self.images


def build_transition(flow: FlowModel, space: GridSpace, T: float, m_max: int) -> GridTransition:
    """Evaluate phi_{mT} exactly on every grid point and project to the grid."""
    if T <= 0:
        raise ValueError(f"time step T={T} must be positive")
    if m_max < 1:
        raise ValueError(f"m_max={m_max} must be a positive integer")
    exact = np.empty((m_max, space.n, space.dim))
    for m in range(1, m_max + 1):
        exact[m - 1] = flow.evaluate(space.points, m * T)
    images = np.empty((m_max, space.n), dtype=np.int64)
    for m in range(m_max):
        images[m] = space.nearest(exact[m])
    return GridTransition(T=T, m_max=m_max, images=images, exact_images=exact)


def load_sampled_transition(path, space: GridSpace, T: float, m_max: int) -> tuple[FlowModel, GridTransition]:
    """Ingest a custom flow from CSV rows ``point_index,m,image_index``.

    Every (point, m) pair for m = 1..m_max must be present exactly once.
    """
    images = np.full((m_max, space.n), -1, dtype=np.int64)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"point_index", "m", "image_index"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"custom flow CSV must have header {sorted(required)}")
        for row in reader:
            u, m, v = int(row["point_index"]), int(row["m"]), int(row["image_index"])
            if not (0 <= u < space.n and 0 <= v < space.n):
                raise ValueError(f"point index out of range in row {row}")
            if not (1 <= m <= m_max):
                raise ValueError(f"step multiplier m={m} outside 1..{m_max}")
            if images[m - 1, u] != -1:
                raise ValueError(f"duplicate row for point {u}, m={m}")
            images[m - 1, u] = v
    if np.any(images < 0):
        missing = int((images < 0).sum())
        raise ValueError(f"custom flow CSV incomplete: {missing} (point, m) pairs missing")
    flow = FlowModel("custom-sampled", space.domain)
    return flow, GridTransition(T=T, m_max=m_max, images=images, exact_images=None)
