"""Critical points of a field: location, Morse classification, certification.

Newton's method on the gradient (with the analytic Hessian as Jacobian) is
run from a seed lattice fine enough for the field's highest mode; converged
points are deduplicated, classified by Hessian inertia and, for rectangles,
searched on the smoothly extended field so that wall and corner saddles are
found with well-defined second derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCriticalPoint, NewtonDivergence
from .field import DomainSpec

MINIMUM = "minimum"
SADDLE = "saddle"
MAXIMUM = "maximum"

DEGENERACY_TOL = 1e-6  # |det H| below this times lam^2 means "not Morse"
_KINDS = {0: MINIMUM, 1: SADDLE, 2: MAXIMUM}


@dataclass(frozen=True, eq=False)
class CriticalPoint:
    """A nondegenerate zero of the gradient with its local data.

    ``index`` counts negative Hessian eigenvalues (0 minimum, 1 saddle,
    2 maximum); ``eigvecs`` columns are the orthonormal eigenframe matching
    ``eigvals``; ``on_boundary`` marks wall/corner saddles of a rectangle.
    """

    x: float
    y: float
    value: float
    index: int
    eigvals: tuple
    eigvecs: np.ndarray
    on_boundary: bool = False

    @property
    def kind(self) -> str:
        return _KINDS[self.index]

    @property
    def point(self):
        return np.array([self.x, self.y])

    def to_dict(self):
        return {
            "x": self.x,
            "y": self.y,
            "value": self.value,
            "kind": self.kind,
            "index": self.index,
            "on_boundary": self.on_boundary,
        }


class CriticalSet:
    """All critical points of a field, split by kind.

    ``minima``/``maxima``/``saddles`` are sorted by coordinates so that ids
    (positions in ``all_points``) are stable across runs.
    """

    def __init__(self, minima, saddles, maxima, is_morse=True):
        key = lambda c: (round(c.x, 9), round(c.y, 9))
        self.minima = sorted(minima, key=key)
        self.saddles = sorted(saddles, key=key)
        self.maxima = sorted(maxima, key=key)
        self.is_morse = is_morse
        self.all_points = self.minima + self.maxima + self.saddles

    @property
    def extrema(self):
        return self.minima + self.maxima

    def saddle_global_id(self, saddle_idx: int) -> int:
        """Index of ``saddles[saddle_idx]`` within ``all_points``."""
        return len(self.minima) + len(self.maxima) + saddle_idx

    def counts(self):
        return len(self.minima), len(self.saddles), len(self.maxima)

    def euler_sum(self) -> int:
        return len(self.minima) - len(self.saddles) + len(self.maxima)

    def positions(self, points=None):
        pts = self.all_points if points is None else points
        if not pts:
            return np.zeros((0, 2))
        return np.array([[c.x, c.y] for c in pts])

    def to_json(self):
        return [c.to_dict() for c in self.all_points]

    def __repr__(self):
        m, s, p = self.counts()
        return f"CriticalSet(minima={m}, saddles={s}, maxima={p})"


def _hessian_eig(fxx, fxy, fyy):
    """Eigenvalues/orthonormal eigenvectors of a symmetric 2x2, closed form."""
    tr = fxx + fyy
    disc = np.sqrt(((fxx - fyy) / 2.0) ** 2 + fxy**2)
    l1 = tr / 2.0 - disc
    l2 = tr / 2.0 + disc
    if abs(fxy) > 1e-14 * (abs(fxx) + abs(fyy) + 1e-300):
        v1 = np.array([l1 - fyy, fxy])
    elif fxx <= fyy:
        v1 = np.array([1.0, 0.0])
    else:
        v1 = np.array([0.0, 1.0])
    v1 = v1 / np.linalg.norm(v1)
    v2 = np.array([-v1[1], v1[0]])
    return (float(l1), float(l2)), np.column_stack([v1, v2])


def _newton_batch(f, seeds, tol_grad, max_iter=40, step_cap=None):
    """Damped Newton on the gradient for a batch of seeds; returns the
    converged positions."""
    pts = seeds.copy()
    L = f.domain.min_extent
    cap = step_cap if step_cap is not None else 0.25 * L
    hscale = f.lam * f.amplitude_scale()
    mu = (1e-8 * hscale) ** 2  # regularizer; negligible for Morse Hessians
    for _ in range(max_iter):
        gx, gy = f.gradient(pts[:, 0], pts[:, 1], check=False)
        fxx, fxy, fyy = f.hessian(pts[:, 0], pts[:, 1], check=False)
        # Gauss-Newton step (H^2 + mu I)^(-1) H g: plain Newton away from
        # degeneracies, well-defined on them
        bx = fxx * gx + fxy * gy
        by = fxy * gx + fyy * gy
        a11 = fxx**2 + fxy**2 + mu
        a12 = fxy * (fxx + fyy)
        a22 = fxy**2 + fyy**2 + mu
        det = a11 * a22 - a12**2
        dx = (a22 * bx - a12 * by) / det
        dy = (a11 * by - a12 * bx) / det
        step = np.hypot(dx, dy)
        scale = np.where(step > cap, cap / np.maximum(step, 1e-300), 1.0)
        pts[:, 0] -= dx * scale
        pts[:, 1] -= dy * scale
    gx, gy = f.gradient(pts[:, 0], pts[:, 1], check=False)
    gnorm = np.hypot(gx, gy)
    conv = gnorm < tol_grad
    return pts[conv], gnorm[conv]


def _dedupe(domain: DomainSpec, pts, gnorms, radius):
    """Keep one representative (smallest residual) per cluster of radius r."""
    order = np.argsort(gnorms)
    kept = []
    for i in order:
        p = pts[i]
        dup = False
        for q in kept:
            dx, dy = domain.delta(p[0] - q[0], p[1] - q[1])
            if dx * dx + dy * dy < radius * radius:
                dup = True
                break
        if not dup:
            kept.append(p)
    return np.array(kept) if kept else np.zeros((0, 2))


def _fold_to_rectangle(domain: DomainSpec, pts):
    """Map points from the doubled reflection torus back onto the rectangle."""
    out = pts.copy()
    for axis, L in ((0, domain.Lx), (1, domain.Ly)):
        t = np.mod(out[:, axis], 2.0 * L)
        out[:, axis] = np.where(t > L, 2.0 * L - t, t)
    return out


def find_critical_points(f, seeds_per_axis=None, newton_tol=1e-9) -> CriticalSet:
    """Locate and classify every critical point of ``f``.

    ``newton_tol`` is relative: convergence requires |grad f| below
    ``newton_tol * sqrt(lam) * amplitude``.  The seed lattice defaults to
    8 per highest mode frequency and must be at least 4 per frequency.
    Raises DegenerateCriticalPoint if any converged point has a Hessian
    determinant below the Morse tolerance, and NewtonDivergence if the
    residual scan sees a gradient zero that no converged point explains.
    """
    nmax = f.max_frequency()
    s = int(seeds_per_axis) if seeds_per_axis else 8 * max(1, nmax)
    if s < 4 * max(1, nmax):
        raise ValueError("seed lattice coarser than 4 per mode frequency")

    work = f.extended()  # torus fields come back unchanged
    dom = work.domain
    gscale = np.sqrt(work.lam) * work.amplitude_scale()
    tol_grad = newton_tol * gscale

    s_work = s if f.domain.is_torus else 2 * s
    xs = (np.arange(s_work) + 0.5) * dom.Lx / s_work
    ys = (np.arange(s_work) + 0.5) * dom.Ly / s_work
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    seeds = np.column_stack([gx.ravel(), gy.ravel()])

    pts, gn = _newton_batch(work, seeds, tol_grad, step_cap=0.6 * dom.Lx / s_work)
    if pts.size == 0:
        raise NewtonDivergence("no Newton seed converged")
    dedupe_radius = dom.min_extent / (8.0 * s_work)
    pts = _canonical_points(f, work, pts, dedupe_radius)

    # completeness loop: re-seed from any unexplained gradient zero seen by
    # the dense scan (weak critical points can have tiny Newton basins)
    scan_cells, scan_h = _scan_low_cells(work, 4 * s_work, f.domain)
    explain_radius = 2.0 * np.sqrt(2.0) * scan_h
    for _ in range(3):
        unexplained = _unexplained(scan_cells, pts, explain_radius, f.domain)
        if unexplained.size == 0:
            break
        extra, _ = _newton_batch(work, unexplained.copy(), tol_grad)
        if extra.size == 0:
            break
        grown = _canonical_points(f, work, np.vstack([pts, extra]), dedupe_radius)
        if len(grown) == len(pts):
            break
        pts = grown

    minima, saddles, maxima = [], [], []
    for x, y in pts:
        val = float(work.value(x, y, check=False))
        fxx, fxy, fyy = (float(v) for v in work.hessian(x, y, check=False))
        det = fxx * fyy - fxy**2
        if abs(det) < DEGENERACY_TOL * work.lam**2 * work.amplitude_scale() ** 2:
            raise DegenerateCriticalPoint(
                f"near-singular Hessian at ({x:.6f}, {y:.6f}); field is not Morse "
                "within tolerance"
            )
        eigvals, eigvecs = _hessian_eig(fxx, fxy, fyy)
        index = int(eigvals[0] < 0) + int(eigvals[1] < 0)
        on_boundary = False
        if not f.domain.is_torus:
            on_boundary = (
                x in (0.0, f.domain.Lx) or y in (0.0, f.domain.Ly)
            )
            if on_boundary and index != 1:
                raise DegenerateCriticalPoint(
                    f"boundary critical point at ({x:.6f}, {y:.6f}) is not a saddle"
                )
            if on_boundary:
                val = 0.0  # Dirichlet wall
        cp = CriticalPoint(float(x), float(y), val, index, eigvals, eigvecs, on_boundary)
        [minima, saddles, maxima][index].append(cp)

    cs = CriticalSet(minima, saddles, maxima)

    if f.domain.is_torus and cs.euler_sum() != 0:
        raise NewtonDivergence(
            f"critical counts {cs.counts()} violate the torus Euler relation"
        )

    # cells still beyond the two-cell rule must at least polish onto a known
    # point; weak (small-Hessian) critical points depress the gradient over
    # a wide neighborhood, which the distance rule alone cannot see
    leftover = _unexplained(scan_cells, pts, explain_radius, f.domain)
    if leftover.size:
        polished, _ = _newton_batch(work, leftover.copy(), tol_grad)
        if polished.shape[0] != leftover.shape[0]:
            raise NewtonDivergence(
                f"{len(leftover) - polished.shape[0]} scan cells with near-zero "
                "gradient do not converge to any critical point"
            )
        folded = _fold_snap(f, work, polished)
        far = _unexplained(folded, pts, dedupe_radius, f.domain)
        if far.size:
            raise NewtonDivergence(
                f"unexplained gradient zero near ({far[0][0]:.5f}, {far[0][1]:.5f})"
            )
    return cs


def _fold_snap(f, work, pts):
    """Wrap onto the working torus, fold rectangles back, snap wall points."""
    pts = pts.copy()
    dom = work.domain
    pts[:, 0] = np.mod(pts[:, 0], dom.Lx)
    pts[:, 1] = np.mod(pts[:, 1], dom.Ly)
    if not f.domain.is_torus:
        pts = _fold_to_rectangle(f.domain, pts)
        snap = 1e-7 * f.domain.min_extent
        for axis, L in ((0, f.domain.Lx), (1, f.domain.Ly)):
            pts[:, axis] = np.where(np.abs(pts[:, axis]) < snap, 0.0, pts[:, axis])
            pts[:, axis] = np.where(np.abs(pts[:, axis] - L) < snap, L, pts[:, axis])
    return pts


def _canonical_points(f, work, pts, dedupe_radius):
    pts = _fold_snap(f, work, pts)
    gx, gy = work.gradient(pts[:, 0], pts[:, 1], check=False)
    base = f.domain if not f.domain.is_torus else work.domain
    return _dedupe(base, pts, np.hypot(gx, gy), dedupe_radius)


def _scan_low_cells(work, n: int, base: DomainSpec):
    """Cells of a dense grid whose gradient is suspiciously small, mapped to
    the base domain (folded for rectangles)."""
    dom = work.domain
    h = dom.Lx / n
    xs = (np.arange(n) + 0.5) * h
    ys = (np.arange(n) + 0.5) * dom.Ly / n
    gxg, gyg = np.meshgrid(xs, ys, indexing="ij")
    gx, gy = work.gradient(gxg.ravel(), gyg.ravel(), check=False)
    gn = np.hypot(gx, gy)
    thresh = 0.1 * np.sqrt(work.lam) * h * work.amplitude_scale()
    low = np.flatnonzero(gn < thresh)
    cells = np.column_stack([gxg.ravel()[low], gyg.ravel()[low]])
    if not base.is_torus:
        cells = _fold_to_rectangle(base, cells)
    return cells, h


def _unexplained(cells, pts, radius, base: DomainSpec):
    """Subset of cells farther than ``radius`` from every located point."""
    if cells.size == 0:
        return cells
    dx = cells[:, None, 0] - pts[None, :, 0]
    dy = cells[:, None, 1] - pts[None, :, 1]
    if base.is_torus:
        dx -= base.Lx * np.round(dx / base.Lx)
        dy -= base.Ly * np.round(dy / base.Ly)
    dmin = np.min(np.hypot(dx, dy), axis=1)
    return cells[dmin > radius]


def morse_smale_check(cs: CriticalSet, nls, tol=None) -> bool:
    """True iff no separatrix connects two saddles.

    ``nls`` is the traced Neumann line set; its saddle-connection flags are
    produced during tracing (a path terminating inside another saddle's
    capture ball).  ``tol`` is accepted for interface compatibility; the
    capture radius used during tracing is authoritative.
    """
    return cs.is_morse and not nls.saddle_connections
