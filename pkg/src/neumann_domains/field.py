"""Scalar eigenfunction fields on flat 2D domains.

Two field families are supported: analytic separable mode sums (exact values
and derivatives) and sampled grids with a C2 bicubic interpolant, on either a
flat torus or an axis-aligned rectangle with Dirichlet walls.  All evaluation
is vectorized over numpy arrays and pure, so fields are safe to share across
threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import FieldFormatError, MixedEigenvalueError, PointOutsideDomain

TORUS = "torus"
RECTANGLE = "rectangle"

_EIGENVALUE_RTOL = 1e-9  # modes must share one Laplacian eigenvalue


@dataclass(frozen=True)
class DomainSpec:
    """Flat base domain: a torus [0,Lx)x[0,Ly) or a rectangle [0,Lx]x[0,Ly].

    Rectangle corners have interior angle pi/2; torus coordinates are
    identified mod (Lx, Ly).
    """

    kind: str
    Lx: float = 1.0
    Ly: float = 1.0

    def __post_init__(self):
        if self.kind not in (TORUS, RECTANGLE):
            raise FieldFormatError(f"unknown domain kind {self.kind!r}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise FieldFormatError("domain extents must be positive")

    @property
    def is_torus(self) -> bool:
        return self.kind == TORUS

    @property
    def min_extent(self) -> float:
        return min(self.Lx, self.Ly)

    def wrap(self, x, y):
        """Canonical representative in [0,Lx)x[0,Ly) (identity on rectangles)."""
        if self.is_torus:
            return np.mod(x, self.Lx), np.mod(y, self.Ly)
        return np.asarray(x, float), np.asarray(y, float)

    def contains(self, x, y, tol=0.0):
        if self.is_torus:
            return np.ones(np.broadcast(x, y).shape, dtype=bool)
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        return (x >= -tol) & (x <= self.Lx + tol) & (y >= -tol) & (y <= self.Ly + tol)

    def delta(self, dx, dy):
        """Shortest displacement: minimal image on the torus, identity otherwise."""
        dx = np.asarray(dx, float)
        dy = np.asarray(dy, float)
        if self.is_torus:
            dx = dx - self.Lx * np.round(dx / self.Lx)
            dy = dy - self.Ly * np.round(dy / self.Ly)
        return dx, dy

    def distance(self, p, q):
        dx, dy = self.delta(p[0] - q[0], p[1] - q[1])
        return float(np.hypot(dx, dy))


@dataclass(frozen=True)
class SeparableMode:
    """One product mode amp * T(kx*x) * T(ky*y) with T in {cos, sin} per axis."""

    amplitude: float
    nx: int
    ny: int
    px: str = "cos"
    py: str = "cos"

    def __post_init__(self):
        if self.px not in ("cos", "sin") or self.py not in ("cos", "sin"):
            raise FieldFormatError("mode parity must be 'cos' or 'sin'")
        if self.nx < 0 or self.ny < 0:
            raise FieldFormatError("mode frequencies must be nonnegative")


def _mode_wavenumbers(domain: DomainSpec, mode: SeparableMode):
    if domain.is_torus:
        return 2.0 * np.pi * mode.nx / domain.Lx, 2.0 * np.pi * mode.ny / domain.Ly
    return np.pi * mode.nx / domain.Lx, np.pi * mode.ny / domain.Ly


class AnalyticEigenfunction:
    """Eigenfunction given as a finite sum of separable modes.

    Every mode must carry the same Laplacian eigenvalue kx^2 + ky^2 (relative
    tolerance 1e-9); on rectangles only sine-sine modes with nx, ny >= 1 are
    admissible so that the Dirichlet condition holds exactly.
    """

    def __init__(self, domain: DomainSpec, modes):
        modes = tuple(modes)
        if not modes:
            raise FieldFormatError("mode list is empty")
        if not domain.is_torus:
            for m in modes:
                if m.px != "sin" or m.py != "sin" or m.nx < 1 or m.ny < 1:
                    raise FieldFormatError(
                        "rectangle modes must be sine-sine with nx, ny >= 1"
                    )
        ks = np.array([_mode_wavenumbers(domain, m) for m in modes])
        lams = ks[:, 0] ** 2 + ks[:, 1] ** 2
        lam = float(lams[0])
        if lam <= 0:
            raise FieldFormatError("constant (zero-frequency) field is not admissible")
        if np.any(np.abs(lams - lam) > _EIGENVALUE_RTOL * lam):
            raise MixedEigenvalueError(
                f"modes span several eigenvalues: {sorted(set(np.round(lams, 12)))}"
            )
        self.domain = domain
        self.modes = modes
        self.lam = lam
        self._amp = np.array([m.amplitude for m in modes])
        self._kx = ks[:, 0]
        self._ky = ks[:, 1]
        # parity flag 0 -> cos, 1 -> sin
        self._sx = np.array([m.px == "sin" for m in modes], dtype=bool)
        self._sy = np.array([m.py == "sin" for m in modes], dtype=bool)

    # -- evaluation ------------------------------------------------------

    def _tables(self, x, y):
        """Per-mode axis factors and their first two derivatives."""
        x = np.asarray(x, float)[..., None]
        y = np.asarray(y, float)[..., None]
        ax = self._kx * x
        ay = self._ky * y
        cx, sx = np.cos(ax), np.sin(ax)
        cy, sy = np.cos(ay), np.sin(ay)
        # T, T', T'' for the chosen parity, chain rule applied
        tx = np.where(self._sx, sx, cx)
        dtx = np.where(self._sx, cx, -sx) * self._kx
        ddtx = -tx * self._kx**2
        ty = np.where(self._sy, sy, cy)
        dty = np.where(self._sy, cy, -sy) * self._ky
        ddty = -ty * self._ky**2
        return tx, dtx, ddtx, ty, dty, ddty

    def _check(self, x, y):
        if not self.domain.is_torus:
            inside = self.domain.contains(x, y, tol=1e-12 * self.domain.min_extent)
            if not np.all(inside):
                raise PointOutsideDomain(
                    "evaluation point outside the rectangle domain"
                )

    def value(self, x, y, check=True):
        if check:
            self._check(x, y)
        tx, _, _, ty, _, _ = self._tables(x, y)
        return (self._amp * tx * ty).sum(axis=-1)

    def gradient(self, x, y, check=True):
        if check:
            self._check(x, y)
        tx, dtx, _, ty, dty, _ = self._tables(x, y)
        fx = (self._amp * dtx * ty).sum(axis=-1)
        fy = (self._amp * tx * dty).sum(axis=-1)
        return fx, fy

    def hessian(self, x, y, check=True):
        if check:
            self._check(x, y)
        tx, dtx, ddtx, ty, dty, ddty = self._tables(x, y)
        fxx = (self._amp * ddtx * ty).sum(axis=-1)
        fxy = (self._amp * dtx * dty).sum(axis=-1)
        fyy = (self._amp * tx * ddty).sum(axis=-1)
        return fxx, fxy, fyy

    def amplitude_scale(self) -> float:
        return float(np.sum(np.abs(self._amp)))

    def max_frequency(self) -> int:
        return int(max(max(m.nx, m.ny) for m in self.modes))

    # -- derived fields ----------------------------------------------------

    def extended(self) -> "AnalyticEigenfunction":
        """Smooth continuation past the walls by odd reflection.

        A rectangle sine mode sin(pi n x / Lx) is odd across x = 0 and
        x = Lx and 2Lx-periodic, so the same mode sum read as sine modes on
        the (2Lx, 2Ly) torus is the continuation.  Torus fields are returned
        unchanged.
        """
        if self.domain.is_torus:
            return self
        big = DomainSpec(TORUS, 2.0 * self.domain.Lx, 2.0 * self.domain.Ly)
        modes = [
            SeparableMode(m.amplitude, m.nx, m.ny, "sin", "sin") for m in self.modes
        ]
        return AnalyticEigenfunction(big, modes)

    def sample(self, nx: int, ny: int) -> "GridField":
        """Evaluate on the uniform grid and wrap the result in a GridField."""
        xs, ys = grid_nodes(self.domain, nx, ny)
        vals = self.value(xs[:, None], ys[None, :])
        return GridField(self.domain, vals, self.lam)


def grid_nodes(domain: DomainSpec, nx: int, ny: int):
    """Node coordinates of the sampling grid.

    Torus grids omit the periodic image (spacing Lx/nx); rectangle grids
    include both walls (spacing Lx/(nx-1)).
    """
    if domain.is_torus:
        xs = np.arange(nx) * (domain.Lx / nx)
        ys = np.arange(ny) * (domain.Ly / ny)
    else:
        xs = np.linspace(0.0, domain.Lx, nx)
        ys = np.linspace(0.0, domain.Ly, ny)
    return xs, ys


def _periodic_bspline_coeffs(values):
    """Cubic B-spline interpolation coefficients on a periodic grid.

    Solves (c_{i-1} + 4 c_i + c_{i+1}) / 6 = v_i per axis with FFTs; the
    transfer function (4 + 2 cos(2 pi k / n)) / 6 never vanishes.
    """
    coeffs = np.asarray(values, float)
    for axis in range(2):
        n = coeffs.shape[axis]
        k = 2.0 * np.pi * np.fft.rfftfreq(n)
        filt = (4.0 + 2.0 * np.cos(k)) / 6.0
        spec = np.fft.rfft(coeffs, axis=axis)
        shape = [1, 1]
        shape[axis] = filt.size
        coeffs = np.fft.irfft(spec / filt.reshape(shape), n=n, axis=axis)
    return coeffs


def _bspline_weights(u, deriv):
    """The four uniform cubic B-spline tap weights (or derivatives) at u."""
    u = np.asarray(u, float)
    if deriv == 0:
        w0 = (1 - u) ** 3 / 6.0
        w1 = (3 * u**3 - 6 * u**2 + 4) / 6.0
        w2 = (-3 * u**3 + 3 * u**2 + 3 * u + 1) / 6.0
        w3 = u**3 / 6.0
    elif deriv == 1:
        w0 = -((1 - u) ** 2) / 2.0
        w1 = (9 * u**2 - 12 * u) / 6.0
        w2 = (-9 * u**2 + 6 * u + 3) / 6.0
        w3 = u**2 / 2.0
    else:
        w0 = 1.0 - u
        w1 = 3.0 * u - 2.0
        w2 = 1.0 - 3.0 * u
        w3 = u
    return np.stack([w0, w1, w2, w3], axis=-1)


class GridField:
    """Sampled field with a C2 bicubic interpolant.

    Torus grids use an exactly periodic cubic B-spline (coefficients solved
    by FFT); rectangle grids use a standard bicubic spline.  The Hessian is
    defined everywhere, which is what the Morse machinery needs.
    """

    def __init__(self, domain: DomainSpec, values, lam: float):
        values = np.asarray(values, float)
        if values.ndim != 2 or min(values.shape) < 8:
            raise FieldFormatError("grid must be 2D with at least 8 nodes per axis")
        self.domain = domain
        self.values = values
        self.lam = float(lam)
        self.nx, self.ny = values.shape
        if domain.is_torus:
            self.hx = domain.Lx / self.nx
            self.hy = domain.Ly / self.ny
            self._coeffs = _periodic_bspline_coeffs(values)
            self._spline = None
        else:
            self.hx = domain.Lx / (self.nx - 1)
            self.hy = domain.Ly / (self.ny - 1)
            xs, ys = grid_nodes(domain, self.nx, self.ny)
            self._spline = RectBivariateSpline(xs, ys, values, kx=3, ky=3, s=0)
            self._coeffs = None

    def _check(self, x, y):
        if not self.domain.is_torus:
            inside = self.domain.contains(x, y, tol=1e-12 * self.domain.min_extent)
            if not np.all(inside):
                raise PointOutsideDomain(
                    "evaluation point outside the rectangle domain"
                )

    def _periodic_eval(self, x, y, dx, dy):
        tx = np.asarray(x, float) / self.hx
        ty = np.asarray(y, float) / self.hy
        bx = np.floor(tx)
        by = np.floor(ty)
        ux = tx - bx
        uy = ty - by
        wx = _bspline_weights(ux, dx) / self.hx**dx
        wy = _bspline_weights(uy, dy) / self.hy**dy
        ix = (bx.astype(np.int64)[..., None] + np.arange(-1, 3)) % self.nx
        iy = (by.astype(np.int64)[..., None] + np.arange(-1, 3)) % self.ny
        # 4x4 tensor gather around each query point
        taps = self._coeffs[ix[..., :, None], iy[..., None, :]]
        return np.einsum("...ij,...i,...j->...", taps, wx, wy)

    def _eval(self, x, y, dx, dy):
        if self.domain.is_torus:
            return self._periodic_eval(x, y, dx, dy)
        xc = np.clip(np.asarray(x, float), 0.0, self.domain.Lx)
        yc = np.clip(np.asarray(y, float), 0.0, self.domain.Ly)
        out = self._spline.ev(xc.ravel(), yc.ravel(), dx=dx, dy=dy)
        return out.reshape(np.shape(xc)) if np.ndim(xc) else float(out[0])

    def value(self, x, y, check=True):
        if check:
            self._check(x, y)
        return self._eval(x, y, 0, 0)

    def gradient(self, x, y, check=True):
        if check:
            self._check(x, y)
        return self._eval(x, y, 1, 0), self._eval(x, y, 0, 1)

    def hessian(self, x, y, check=True):
        if check:
            self._check(x, y)
        return self._eval(x, y, 2, 0), self._eval(x, y, 1, 1), self._eval(x, y, 0, 2)

    def amplitude_scale(self) -> float:
        return float(np.max(np.abs(self.values)))

    def max_frequency(self) -> int:
        # estimated from the eigenvalue: a torus mode n has lam >= (2 pi n / L)^2
        n = np.sqrt(max(self.lam, 0.0)) * max(self.domain.Lx, self.domain.Ly) / (2 * np.pi)
        return max(1, int(np.ceil(n)))

    def extended(self) -> "GridField":
        if self.domain.is_torus:
            return self
        # odd reflection of the sample grid onto the doubled torus
        big = DomainSpec(TORUS, 2.0 * self.domain.Lx, 2.0 * self.domain.Ly)
        v = self.values
        vx = np.concatenate([v, -v[-2:0:-1, :]], axis=0)
        vfull = np.concatenate([vx, -vx[:, -2:0:-1]], axis=1)
        return GridField(big, vfull, self.lam)

    def sample(self, nx: int, ny: int) -> "GridField":
        xs, ys = grid_nodes(self.domain, nx, ny)
        vals = self.value(xs[:, None], ys[None, :])
        return GridField(self.domain, vals, self.lam)


# -- JSON interface --------------------------------------------------------


def domain_from_dict(d) -> DomainSpec:
    try:
        kind = d["kind"].lower()
    except (KeyError, TypeError, AttributeError) as exc:
        raise FieldFormatError("domain object needs a 'kind'") from exc
    if kind in ("rectangle_dirichlet", "rectangle"):
        kind = RECTANGLE
    return DomainSpec(kind, float(d.get("Lx", 1.0)), float(d.get("Ly", 1.0)))


def field_from_dict(doc):
    """Build a field from the JSON envelope.

    Analytic: {"domain": {...}, "modes": [{"amp","nx","ny","px","py"}, ...]}
    Grid:     {"domain": {...}, "grid": {"nx","ny","values"}, "lambda": ...}
    """
    if not isinstance(doc, dict):
        raise FieldFormatError("field document must be a JSON object")
    domain = domain_from_dict(doc.get("domain", {}))
    if "modes" in doc:
        modes = []
        for m in doc["modes"]:
            try:
                modes.append(
                    SeparableMode(
                        float(m.get("amp", 1.0)),
                        int(m["nx"]),
                        int(m["ny"]),
                        str(m.get("px", "cos")),
                        str(m.get("py", "cos")),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise FieldFormatError(f"bad mode entry: {m!r}") from exc
        return AnalyticEigenfunction(domain, modes)
    if "grid" in doc:
        g = doc["grid"]
        try:
            nx, ny = int(g["nx"]), int(g["ny"])
            values = np.asarray(g["values"], float).reshape(nx, ny)
            lam = float(doc["lambda"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FieldFormatError("bad grid field document") from exc
        return GridField(domain, values, lam)
    raise FieldFormatError("field document needs 'modes' or 'grid'")


def field_from_json(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FieldFormatError(f"invalid JSON: {exc}") from exc
    return field_from_dict(doc)


def field_to_dict(f):
    d = {"domain": {"kind": f.domain.kind, "Lx": f.domain.Lx, "Ly": f.domain.Ly}}
    if isinstance(f, AnalyticEigenfunction):
        d["modes"] = [
            {"amp": m.amplitude, "nx": m.nx, "ny": m.ny, "px": m.px, "py": m.py}
            for m in f.modes
        ]
    else:
        d["grid"] = {
            "nx": f.nx,
            "ny": f.ny,
            "values": [float(v) for v in f.values.ravel()],
        }
        d["lambda"] = f.lam
    return d


# -- convenience constructors used across tests and demos -------------------


def torus_cosine(nx: int, ny: int, Lx=1.0, Ly=1.0) -> AnalyticEigenfunction:
    """cos(2 pi nx x / Lx) cos(2 pi ny y / Ly) on the (Lx, Ly) torus."""
    return AnalyticEigenfunction(
        DomainSpec(TORUS, Lx, Ly), [SeparableMode(1.0, nx, ny, "cos", "cos")]
    )


def rectangle_sine(nx: int, ny: int, Lx=1.0, Ly=1.0) -> AnalyticEigenfunction:
    """sin(pi nx x / Lx) sin(pi ny y / Ly) on [0,Lx]x[0,Ly] with Dirichlet walls."""
    return AnalyticEigenfunction(
        DomainSpec(RECTANGLE, Lx, Ly), [SeparableMode(1.0, nx, ny, "sin", "sin")]
    )


def stern_field(r: int, coefficient: float = 0.98) -> AnalyticEigenfunction:
    """sin(2r x) sin(y) + c sin(x) sin(2r y) on the [0,pi]^2 Dirichlet square.

    Both modes share the eigenvalue 4 r^2 + 1.  Near c = 1 the function has
    very few nodal domains while its saddle count grows like r^2.
    """
    dom = DomainSpec(RECTANGLE, np.pi, np.pi)
    return AnalyticEigenfunction(
        dom,
        [
            SeparableMode(1.0, 2 * r, 1, "sin", "sin"),
            SeparableMode(float(coefficient), 1, 2 * r, "sin", "sin"),
        ],
    )
