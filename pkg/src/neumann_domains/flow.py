"""Gradient-flow integration: single paths, saddle separatrices, and the
batched limit-finding used for raster labeling.

The flow is d/dt phi = -grad f.  Descending paths follow -grad f toward
minima (or out through a Dirichlet wall), ascending paths follow +grad f
toward maxima.  Separatrices launch from a saddle along its Hessian
eigenframe: the two descending legs along the negative-eigenvalue direction
form the unstable manifold, the two ascending legs the stable manifold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    NoSaddles,
    StagnationWithoutCapture,
    StepBudgetExceeded,
)
from .morse import SADDLE, CriticalSet

DESCENDING = "descending"
ASCENDING = "ascending"


@dataclass
class FlowOptions:
    """Numerical knobs for flow integration, scaled from the domain extent."""

    capture_radius: float
    max_step: float
    launch_eps: float
    ode_tol: float = 1e-9
    max_steps: int = 50_000
    suppress_steps: int = 10

    @classmethod
    def for_field(cls, f, capture_radius=None, ode_tol=1e-9, max_step=None):
        L = f.domain.min_extent
        return cls(
            capture_radius=capture_radius if capture_radius else 1e-3 * L,
            max_step=max_step if max_step else L / 512.0,
            launch_eps=1e-4 * L,
            ode_tol=ode_tol,
        )


@dataclass
class FlowPath:
    """Polyline trajectory of the (anti)gradient flow.

    ``terminus_kind`` is 'minimum' / 'maximum' / 'saddle' / 'boundary';
    ``terminus_id`` indexes ``CriticalSet.all_points`` (None for boundary
    exits).  Points are stored unwrapped on the torus (continuous lift).
    """

    points: np.ndarray
    values: np.ndarray
    direction: str
    terminus_kind: str
    terminus_point: np.ndarray
    terminus_id: int | None
    origin_id: int | None = None

    @property
    def arclength(self) -> float:
        d = np.diff(self.points, axis=0)
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))

    def monotonicity_violation(self) -> float:
        """Largest adverse increment of f along the path (0 if monotone)."""
        d = np.diff(self.values)
        adverse = d if self.direction == DESCENDING else -d
        return float(max(0.0, np.max(adverse))) if adverse.size else 0.0


class NeumannLineSet:
    """Saddle separatrices plus their closure data.

    ``separatrices`` maps the saddle's position in ``cs.saddles`` to its
    traced legs (4 for interior saddles, 2 for wall saddles, 1 at corners).
    ``saddle_connections`` lists (saddle_idx, leg_idx, other_saddle_id)
    events; a nonempty list means the field is not Morse-Smale.
    """

    def __init__(self, cs: CriticalSet):
        self.cs = cs
        self.separatrices: dict[int, list[FlowPath]] = {}
        self.saddle_connections: list[tuple[int, int, int]] = []
        self.boundary_crossings: list[np.ndarray] = []
        self._segments = None

    def add(self, saddle_idx: int, paths: list[FlowPath]):
        self.separatrices[saddle_idx] = paths
        for j, p in enumerate(paths):
            if p.terminus_kind == SADDLE:
                self.saddle_connections.append((saddle_idx, j, p.terminus_id))
            elif p.terminus_kind == "boundary":
                self.boundary_crossings.append(p.terminus_point)

    def all_paths(self):
        for idx in sorted(self.separatrices):
            yield from self.separatrices[idx]

    @property
    def closure_extrema(self):
        """Ids (into cs.all_points) of extremal endpoints of the line set."""
        out = set()
        for p in self.all_paths():
            if p.terminus_kind in ("minimum", "maximum"):
                out.add(p.terminus_id)
        return sorted(out)

    def segments(self) -> np.ndarray:
        """All polyline segments, shape (m, 2, 2), in lift coordinates."""
        if self._segments is None:
            chunks = []
            for p in self.all_paths():
                pts = p.points
                if len(pts) >= 2:
                    chunks.append(np.stack([pts[:-1], pts[1:]], axis=1))
            self._segments = (
                np.concatenate(chunks, axis=0) if chunks else np.zeros((0, 2, 2))
            )
        return self._segments

    def distance_to(self, pts, domain) -> np.ndarray:
        """Distance from each query point to the nearest separatrix segment
        (torus-aware; segments are short so the minimal image of the segment
        midpoint is the right local chart)."""
        segs = self.segments()
        if segs.shape[0] == 0:
            return np.full(len(pts), np.inf)
        a = segs[:, 0]
        b = segs[:, 1]
        mid = 0.5 * (a + b)
        out = np.full(len(pts), np.inf)
        # chunk over segments to bound memory
        step = max(1, int(4e6 // max(len(pts), 1)))
        for s0 in range(0, len(segs), step):
            aa = a[s0 : s0 + step]
            bb = b[s0 : s0 + step]
            mm = mid[s0 : s0 + step]
            dx = pts[:, None, 0] - mm[None, :, 0]
            dy = pts[:, None, 1] - mm[None, :, 1]
            if domain.is_torus:
                dx -= domain.Lx * np.round(dx / domain.Lx)
                dy -= domain.Ly * np.round(dy / domain.Ly)
            px = dx + (mm[None, :, 0] - aa[None, :, 0])
            py = dy + (mm[None, :, 1] - aa[None, :, 1])
            ex = (bb - aa)[None, :, 0]
            ey = (bb - aa)[None, :, 1]
            ee = np.maximum(ex**2 + ey**2, 1e-300)
            t = np.clip((px * ex + py * ey) / ee, 0.0, 1.0)
            d2 = (px - t * ex) ** 2 + (py - t * ey) ** 2
            out = np.minimum(out, np.sqrt(d2.min(axis=1)))
        return out


def _velocity(f, direction):
    sign = -1.0 if direction == DESCENDING else 1.0

    def v(p):
        gx, gy = f.gradient(p[0], p[1], check=False)
        return sign * np.array([gx, gy])

    return v


# Fehlberg 4(5) tableau
_RKF_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8, 3680 / 513, -845 / 4104),
    (-8 / 27, 2, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_RKF_B5 = (16 / 135, 0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55)
_RKF_B4 = (25 / 216, 0, 1408 / 2565, 2197 / 4104, -1 / 5, 0)


def _rkf45_step(v, y, h):
    k = [v(y)]
    for row in _RKF_A[1:]:
        yi = y + h * sum(a * ki for a, ki in zip(row, k))
        k.append(v(yi))
    y5 = y + h * sum(b * ki for b, ki in zip(_RKF_B5, k))
    y4 = y + h * sum(b * ki for b, ki in zip(_RKF_B4, k))
    return y5, float(np.hypot(*(y5 - y4)))


def _boundary_exit(domain, a, b):
    """First wall crossing of segment a->b, or None if b stays inside."""
    if domain.is_torus:
        return None
    eps = 1e-12 * domain.min_extent
    if domain.contains(b[0], b[1], tol=eps):
        return None
    d = b - a
    tmin, wall = np.inf, None
    for lo, hi, i in ((0.0, domain.Lx, 0), (0.0, domain.Ly, 1)):
        for w in (lo, hi):
            if abs(d[i]) > 1e-300:
                t = (w - a[i]) / d[i]
                if 0.0 <= t < tmin:
                    p = a + t * d
                    j = 1 - i
                    L = domain.Ly if j else domain.Lx
                    if -eps <= p[j] <= L + eps:
                        tmin, wall = t, p
    return wall


def integrate_flow(f, start, direction, cs: CriticalSet, opts: FlowOptions,
                   origin_id=None) -> FlowPath:
    """Integrate the flow from ``start`` until capture or boundary exit.

    Termination: (a) within ``capture_radius`` of a critical point, which
    becomes the terminus; (b) crossing a Dirichlet wall (rectangles), the
    crossing point becomes the terminus; (c) the step budget runs out,
    which raises StepBudgetExceeded.  The returned path is monotone in f up
    to ``ode_tol`` times the field amplitude (enforced by step rejection).
    """
    if direction not in (DESCENDING, ASCENDING):
        raise ValueError(f"bad direction {direction!r}")
    dom = f.domain
    fscale = f.amplitude_scale()
    gscale = np.sqrt(f.lam) * fscale
    mono_tol = opts.ode_tol * fscale
    stag_tol = 1e-11 * gscale
    tol_abs = opts.ode_tol * dom.min_extent

    v = _velocity(f, direction)
    y = np.asarray(start, float).copy()
    g0 = np.hypot(*v(y))
    if origin_id is None and g0 < 1e-6 * gscale:
        raise ValueError("flow started at a critical point")

    cpos = cs.positions()
    sign = 1.0 if direction == ASCENDING else -1.0

    pts = [y.copy()]
    vals = [float(f.value(y[0], y[1], check=False))]
    h = opts.max_step / max(g0, 1e-12)

    for step_idx in range(opts.max_steps):
        vy = v(y)
        speed = np.hypot(*vy)
        if speed < stag_tol:
            d = _cp_distances(dom, y, cpos)
            near = int(np.argmin(d))
            if d[near] < opts.capture_radius:
                return _finish(f, pts, vals, direction, cs, near, origin_id)
            raise StagnationWithoutCapture(
                f"flow stalled at ({y[0]:.6f}, {y[1]:.6f}) away from all "
                "critical points"
            )
        h = min(h, opts.max_step / speed)
        ynew, err = _rkf45_step(v, y, h)
        if err > tol_abs and h > 1e-14:
            h = max(h * max(0.2, 0.9 * (tol_abs / err) ** 0.2), 1e-14)
            continue
        fnew = float(f.value(ynew[0], ynew[1], check=False))
        adverse = (fnew - vals[-1]) * (-sign)
        if adverse > mono_tol and h > 1e-14:
            h = max(0.3 * h, 1e-14)
            continue
        wall = _boundary_exit(dom, y, ynew)
        if wall is not None:
            pts.append(wall)
            vals.append(float(f.value(wall[0], wall[1], check=False)))
            return FlowPath(
                np.array(pts), np.array(vals), direction,
                "boundary", wall, None, origin_id,
            )
        y = ynew
        pts.append(y.copy())
        vals.append(fnew)
        if err > 0:
            h = min(h * min(4.0, 0.9 * (tol_abs / err) ** 0.2), 1e6)
        else:
            h *= 2.0
        if step_idx >= opts.suppress_steps:
            d = _cp_distances(dom, y, cpos)
            if origin_id is not None:
                # ignore the origin saddle until the path has cleared it
                if d[origin_id] < 2.0 * opts.capture_radius:
                    d = d.copy()
                    d[origin_id] = np.inf
            near = int(np.argmin(d))
            if d[near] < opts.capture_radius:
                return _finish(f, pts, vals, direction, cs, near, origin_id)
    raise StepBudgetExceeded(
        f"no capture after {opts.max_steps} steps from "
        f"({start[0]:.6f}, {start[1]:.6f}) {direction}"
    )


def _cp_distances(dom, y, cpos):
    dx = y[0] - cpos[:, 0]
    dy = y[1] - cpos[:, 1]
    if dom.is_torus:
        dx -= dom.Lx * np.round(dx / dom.Lx)
        dy -= dom.Ly * np.round(dy / dom.Ly)
    return np.hypot(dx, dy)


def _finish(f, pts, vals, direction, cs, cp_index, origin_id):
    cp = cs.all_points[cp_index]
    # land the polyline on the terminus (its own lift image near the path end)
    end = pts[-1]
    dx, dy = f.domain.delta(cp.x - end[0], cp.y - end[1])
    pts.append(np.array([end[0] + dx, end[1] + dy]))
    vals.append(cp.value)
    return FlowPath(
        np.array(pts), np.array(vals), direction,
        cp.kind, pts[-1], cp_index, origin_id,
    )


def trace_saddle_separatrices(f, saddle_idx: int, cs: CriticalSet,
                              opts: FlowOptions) -> list[FlowPath]:
    """Trace the separatrix legs of one saddle.

    Launch points sit at +-eps along the Hessian eigenvectors: the
    negative-eigenvalue direction descends, the positive one ascends.  On
    rectangles only legs launching into the open domain are traced (two for
    wall saddles, one at corners).  Each leg's polyline starts at the saddle
    itself.
    """
    saddle = cs.saddles[saddle_idx]
    if saddle.kind != SADDLE:
        raise ValueError("separatrices are defined at saddles only")
    origin_id = cs.saddle_global_id(saddle_idx)
    r = saddle.point
    v_neg = saddle.eigvecs[:, 0] if saddle.eigvals[0] < 0 else saddle.eigvecs[:, 1]
    v_pos = saddle.eigvecs[:, 1] if saddle.eigvals[0] < 0 else saddle.eigvecs[:, 0]
    legs = []
    for vec, direction in (
        (v_neg, DESCENDING), (-v_neg, DESCENDING),
        (v_pos, ASCENDING), (-v_pos, ASCENDING),
    ):
        start = r + opts.launch_eps * vec
        if not f.domain.is_torus:
            inside = f.domain.contains(start[0], start[1])
            if not bool(np.all(inside)):
                continue
        path = integrate_flow(f, start, direction, cs, opts, origin_id=origin_id)
        path.points = np.vstack([r[None, :], path.points])
        path.values = np.concatenate([[saddle.value], path.values])
        legs.append(path)
    return legs


def build_neumann_line_set(f, cs: CriticalSet, opts: FlowOptions = None) -> NeumannLineSet:
    """Trace every saddle's separatrices and assemble the Neumann line set."""
    if not cs.saddles:
        raise NoSaddles("the field has no saddle points")
    if opts is None:
        opts = FlowOptions.for_field(f)
    nls = NeumannLineSet(cs)
    for idx in range(len(cs.saddles)):
        nls.add(idx, trace_saddle_separatrices(f, idx, cs, opts))
    return nls


# -- structural checks on the line set --------------------------------------


def right_angle_deviation(nls: NeumannLineSet) -> float:
    """Largest deviation (radians) from orthogonality between the initial
    ascending and descending directions over all interior saddles."""
    worst = 0.0
    for idx, legs in nls.separatrices.items():
        if nls.cs.saddles[idx].on_boundary:
            continue
        dirs = {}
        for leg in legs:
            d = leg.points[1] - leg.points[0]
            dirs.setdefault(leg.direction, []).append(d / np.linalg.norm(d))
        for a in dirs.get(DESCENDING, []):
            for b in dirs.get(ASCENDING, []):
                worst = max(worst, abs(np.arcsin(np.clip(abs(a @ b), 0, 1))))
    return worst


def interlacing_alternates(f, cs: CriticalSet, saddle_idx: int,
                           radius: float) -> bool:
    """On a small circle around the saddle, the four level-set rays of
    f = f(r) must alternate with the four separatrix directions."""
    saddle = cs.saddles[saddle_idx]
    r = saddle.point
    theta = np.linspace(0.0, 2.0 * np.pi, 2881)[:-1]
    x = r[0] + radius * np.cos(theta)
    y = r[1] + radius * np.sin(theta)
    work = f.extended() if not f.domain.is_torus else f
    g = work.value(x, y, check=False) - saddle.value
    sign = np.sign(g)
    flips = np.flatnonzero(sign != np.roll(sign, -1))
    if len(flips) != 4:
        return False
    zero_angles = theta[flips] + np.pi / 2880.0  # mid-interval estimate
    v_neg = saddle.eigvecs[:, 0] if saddle.eigvals[0] < 0 else saddle.eigvecs[:, 1]
    v_pos = saddle.eigvecs[:, 1] if saddle.eigvals[0] < 0 else saddle.eigvecs[:, 0]
    sep_angles = []
    for vec in (v_neg, -v_neg, v_pos, -v_pos):
        sep_angles.append(np.arctan2(vec[1], vec[0]) % (2 * np.pi))
    events = sorted(
        [(a, "z") for a in zero_angles % (2 * np.pi)]
        + [(a, "s") for a in sep_angles]
    )
    kinds = [k for _, k in events]
    return all(kinds[i] != kinds[(i + 1) % 8] for i in range(8))


# -- batched limit finding for raster labeling ------------------------------

LABEL_BOUNDARY = -1
LABEL_LINE = -2
LABEL_UNRESOLVED = -3


def terminal_labels(f, cs: CriticalSet, points: np.ndarray, direction: str,
                    cell: float, opts: FlowOptions) -> np.ndarray:
    """Limit label of the flow from each point (vectorized).

    Returns, per point: the index of the captured target extremum (into
    ``cs.minima`` for descending, ``cs.maxima`` for ascending), or
    LABEL_BOUNDARY for a Dirichlet-wall exit, LABEL_LINE for trajectories
    that run into a saddle's capture ball (the point lies on a Neumann
    line), LABEL_UNRESOLVED if the budget is exhausted.

    Uses normalized-speed RK4 with step size keyed to the distance from the
    nearest critical point; ``cell`` is the raster spacing that sets the
    step floor and the capture radii.
    """
    dom = f.domain
    targets = cs.minima if direction == DESCENDING else cs.maxima
    apos = cs.positions()
    ncp = len(cs.all_points)
    # column index sets into the all-points distance matrix (all_points is
    # minima + maxima + saddles by construction)
    nmin, nmax = len(cs.minima), len(cs.maxima)
    if direction == DESCENDING:
        tcols = np.arange(0, nmin)
    else:
        tcols = np.arange(nmin, nmin + nmax)
    scols = np.arange(nmin + nmax, ncp)
    gscale = np.sqrt(f.lam) * f.amplitude_scale()
    stall = 1e-9 * gscale
    sign = -1.0 if direction == DESCENDING else 1.0

    sep = _min_pairwise(dom, apos)
    r_cap = min(6.0 * cell, sep / 3.0) if len(apos) > 1 else 6.0 * cell
    r_cap = max(r_cap, 1.01 * cell)
    r_band = max(opts.capture_radius, 0.75 * cell)

    n = len(points)
    labels = np.full(n, LABEL_UNRESOLVED, dtype=np.int64)
    pos = points.astype(float).copy()
    idx = np.arange(n)
    max_steps = 12 * max(int(dom.min_extent / cell), 64)

    def grad_unit(p):
        gx, gy = f.gradient(p[:, 0], p[:, 1], check=False)
        gn = np.hypot(gx, gy)
        safe = np.maximum(gn, 1e-300)
        return np.column_stack([gx / safe, gy / safe]) * sign, gn

    for _ in range(max_steps):
        if idx.size == 0:
            break
        d = _dist_to(dom, pos, apos)
        d_near = d.min(axis=1)
        d_t = d[:, tcols].min(axis=1) if tcols.size else np.full(len(pos), np.inf)
        d_s = d[:, scols].min(axis=1) if scols.size else np.full(len(pos), np.inf)
        hit_s = d_s < r_band
        hit_t = (d_t < r_cap) & ~hit_s
        if np.any(hit_t):
            labels[idx[hit_t]] = np.argmin(d[np.ix_(hit_t, tcols)], axis=1)
        labels[idx[hit_s]] = LABEL_LINE
        done = hit_t | hit_s
        v1, gn = grad_unit(pos)
        stalled = (gn < stall) & ~done
        labels[idx[stalled]] = LABEL_LINE  # zero gradient off the saddle balls
        done |= stalled
        if np.any(done):
            keep = ~done
            idx = idx[keep]
            pos = pos[keep]
            v1 = v1[keep]
            d_near = d_near[keep]
            if idx.size == 0:
                break
        h = np.clip(0.35 * d_near, cell / 3.0, 4.0 * cell)[:, None]
        # classic RK4 on the unit-speed field
        k2, _ = grad_unit(pos + 0.5 * h * v1)
        k3, _ = grad_unit(pos + 0.5 * h * k2)
        k4, _ = grad_unit(pos + h * k3)
        newpos = pos + h / 6.0 * (v1 + 2 * k2 + 2 * k3 + k4)
        if not dom.is_torus:
            outside = ~dom.contains(newpos[:, 0], newpos[:, 1])
            if np.any(outside):
                labels[idx[outside]] = LABEL_BOUNDARY
                keep = ~outside
                idx, pos, newpos = idx[keep], pos[keep], newpos[keep]
        pos = newpos
    return labels


def _dist_to(dom, pts, targets):
    if targets.size == 0:
        return np.full((len(pts), 1), np.inf)
    dx = pts[:, None, 0] - targets[None, :, 0]
    dy = pts[:, None, 1] - targets[None, :, 1]
    if dom.is_torus:
        dx -= dom.Lx * np.round(dx / dom.Lx)
        dy -= dom.Ly * np.round(dy / dom.Ly)
    return np.hypot(dx, dy)


def _min_pairwise(dom, pts):
    if len(pts) < 2:
        return np.inf
    d = _dist_to(dom, pts, pts)
    np.fill_diagonal(d, np.inf)
    return float(d.min())
