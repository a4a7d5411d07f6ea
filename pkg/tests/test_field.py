"""Field evaluation against exact substitution and finite-difference oracles."""

import json

import numpy as np
import pytest

from neumann_domains.errors import (
    FieldFormatError,
    MixedEigenvalueError,
    PointOutsideDomain,
)
from neumann_domains.field import (
    RECTANGLE,
    TORUS,
    AnalyticEigenfunction,
    DomainSpec,
    SeparableMode,
    field_from_dict,
    field_from_json,
    field_to_dict,
    rectangle_sine,
    stern_field,
    torus_cosine,
)

PI = np.pi


def test_eval_exact_points():
    f = torus_cosine(1, 1)
    assert f.value(0.0, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert f.value(0.25, 0.25) == pytest.approx(0.0, abs=1e-15)
    g = torus_cosine(1, 3)
    # cos(0) * cos(pi) = -1 by direct substitution
    assert g.value(0.0, 1.0 / 6.0) == pytest.approx(-1.0, abs=1e-12)


def test_gradient_exact_points():
    f = torus_cosine(1, 1)
    fx, fy = f.gradient(0.25, 0.0)
    assert fx == pytest.approx(-2 * PI, abs=1e-12)
    assert fy == pytest.approx(0.0, abs=1e-12)
    fx, fy = f.gradient(0.125, 0.125)
    # -2 pi sin(pi/4) cos(pi/4) = -pi on both axes
    assert fx == pytest.approx(-PI, abs=1e-12)
    assert fy == pytest.approx(-PI, abs=1e-12)


def test_hessian_exact_points():
    f = torus_cosine(1, 1)
    fxx, fxy, fyy = f.hessian(0.25, 0.25)
    assert fxx == pytest.approx(0.0, abs=1e-10)
    assert fyy == pytest.approx(0.0, abs=1e-10)
    assert fxy == pytest.approx(4 * PI**2, rel=1e-13)
    fxx, fxy, fyy = f.hessian(0.0, 0.0)
    assert fxx == pytest.approx(-4 * PI**2, rel=1e-13)
    assert fxy == pytest.approx(0.0, abs=1e-10)
    assert fyy == pytest.approx(-4 * PI**2, rel=1e-13)


def test_eigenvalue_assignment():
    assert torus_cosine(1, 1).lam == pytest.approx(8 * PI**2, rel=1e-14)
    assert torus_cosine(2, 3).lam == pytest.approx(4 * PI**2 * 13, rel=1e-14)
    assert rectangle_sine(1, 1).lam == pytest.approx(2 * PI**2, rel=1e-14)
    assert stern_field(3).lam == pytest.approx(37.0, rel=1e-14)


def test_mixed_eigenvalues_rejected():
    dom = DomainSpec(TORUS)
    with pytest.raises(MixedEigenvalueError):
        AnalyticEigenfunction(
            dom, [SeparableMode(1.0, 1, 1), SeparableMode(1.0, 1, 2)]
        )


def test_rectangle_mode_validation():
    dom = DomainSpec(RECTANGLE)
    with pytest.raises(FieldFormatError):
        AnalyticEigenfunction(dom, [SeparableMode(1.0, 1, 1, "cos", "sin")])
    with pytest.raises(FieldFormatError):
        AnalyticEigenfunction(dom, [SeparableMode(1.0, 0, 1, "sin", "sin")])


def test_rectangle_bounds_check():
    f = rectangle_sine(1, 1)
    with pytest.raises(PointOutsideDomain):
        f.value(1.5, 0.5)
    # closure points are fine
    assert f.value(1.0, 0.3) == pytest.approx(0.0, abs=1e-15)


def test_eigenfunction_residual_random_points():
    rng = np.random.default_rng(7)
    for f in [torus_cosine(1, 1), torus_cosine(2, 3), stern_field(3)]:
        x = rng.uniform(0, f.domain.Lx, 10_000)
        y = rng.uniform(0, f.domain.Ly, 10_000)
        fxx, _, fyy = f.hessian(x, y)
        resid = fxx + fyy + f.lam * f.value(x, y)
        assert np.max(np.abs(resid)) < 1e-9 * f.lam * f.amplitude_scale()


def test_dirichlet_walls_vanish():
    rng = np.random.default_rng(11)
    for f in [rectangle_sine(2, 1), stern_field(2)]:
        t = rng.uniform(0, 1, 250)
        for xs, ys in [
            (np.zeros_like(t), t * f.domain.Ly),
            (np.full_like(t, f.domain.Lx), t * f.domain.Ly),
            (t * f.domain.Lx, np.zeros_like(t)),
            (t * f.domain.Lx, np.full_like(t, f.domain.Ly)),
        ]:
            assert np.max(np.abs(f.value(xs, ys))) < 1e-12


def test_derivatives_match_finite_differences():
    rng = np.random.default_rng(3)
    for f in [torus_cosine(1, 3), stern_field(2)]:
        L = f.domain.min_extent
        h = 1e-4 * L
        x = rng.uniform(2 * h, f.domain.Lx - 2 * h, 1000)
        y = rng.uniform(2 * h, f.domain.Ly - 2 * h, 1000)
        fx, fy = f.gradient(x, y)
        gx = (f.value(x + h, y) - f.value(x - h, y)) / (2 * h)
        gy = (f.value(x, y + h) - f.value(x, y - h)) / (2 * h)
        scale = np.sqrt(f.lam) * f.amplitude_scale()
        assert np.max(np.abs(fx - gx)) < 1e-5 * scale
        assert np.max(np.abs(fy - gy)) < 1e-5 * scale
        fxx, fxy, fyy = f.hessian(x, y)
        hxx = (f.value(x + h, y) - 2 * f.value(x, y) + f.value(x - h, y)) / h**2
        hyy = (f.value(x, y + h) - 2 * f.value(x, y) + f.value(x, y - h)) / h**2
        hxy = (
            f.value(x + h, y + h)
            - f.value(x + h, y - h)
            - f.value(x - h, y + h)
            + f.value(x - h, y - h)
        ) / (4 * h**2)
        hscale = f.lam * f.amplitude_scale()
        assert np.max(np.abs(fxx - hxx)) < 1e-5 * hscale
        assert np.max(np.abs(fyy - hyy)) < 1e-5 * hscale
        assert np.max(np.abs(fxy - hxy)) < 1e-5 * hscale


def test_extension_of_ground_state():
    f = rectangle_sine(1, 1)
    g = f.extended()
    assert g.domain.is_torus
    assert g.domain.Lx == pytest.approx(2.0)
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 1, 300)
    y = rng.uniform(0, 1, 300)
    assert np.allclose(g.value(x, y), f.value(x, y), atol=1e-13)
    # Dirichlet wall survives the extension
    assert g.value(0.0, 0.3) == pytest.approx(0.0, abs=1e-14)
    # normal derivative at (0, 1/2) is pi
    gx, _ = g.gradient(0.0, 0.5)
    assert gx == pytest.approx(PI, rel=1e-13)


def test_grid_sample_roundtrip():
    f = torus_cosine(1, 1)
    g = f.sample(256, 256)
    for p in [(0.0, 0.0), (0.123, 0.456), (0.251, 0.249)]:
        assert g.value(*p) == pytest.approx(f.value(*p), abs=1e-6)


def test_grid_hessian_close_to_analytic():
    f = torus_cosine(1, 1)
    g = f.sample(256, 256)
    rng = np.random.default_rng(13)
    x = rng.uniform(0, 1, 500)
    y = rng.uniform(0, 1, 500)
    for a, b in zip(g.hessian(x, y), f.hessian(x, y)):
        assert np.max(np.abs(a - b)) < 1e-3 * 4 * PI**2


def test_grid_discrete_laplacian_residual():
    f = torus_cosine(1, 2)
    for n in (64, 128):
        g = f.sample(n, n)
        v = g.values
        h = g.hx
        lap = (
            np.roll(v, 1, 0) + np.roll(v, -1, 0) + np.roll(v, 1, 1) + np.roll(v, -1, 1) - 4 * v
        ) / h**2
        resid = np.max(np.abs(lap + f.lam * v))
        assert resid < 5.0 * f.lam**2 * h**2  # O(h^2) with the expected constant
    # halving h cuts the residual by about 4
    g1, g2 = f.sample(64, 64), f.sample(128, 128)

    def worst(g):
        v, h = g.values, g.hx
        lap = (
            np.roll(v, 1, 0) + np.roll(v, -1, 0) + np.roll(v, 1, 1) + np.roll(v, -1, 1) - 4 * v
        ) / h**2
        return np.max(np.abs(lap + g.lam * v))

    assert 3.5 < worst(g1) / worst(g2) < 4.5


def test_grid_rectangle_spline():
    f = rectangle_sine(2, 1)
    g = f.sample(257, 257)
    rng = np.random.default_rng(17)
    x = rng.uniform(0.05, 0.95, 200)
    y = rng.uniform(0.05, 0.95, 200)
    assert np.max(np.abs(g.value(x, y) - f.value(x, y))) < 1e-6
    gx, gy = g.gradient(x, y)
    fx, fy = f.gradient(x, y)
    assert np.max(np.abs(gx - fx)) < 1e-3
    assert np.max(np.abs(gy - fy)) < 1e-3


def test_json_roundtrip_analytic():
    doc = {
        "domain": {"kind": "torus", "Lx": 1.0, "Ly": 1.0},
        "modes": [{"amp": 1.0, "nx": 1, "ny": 3, "px": "cos", "py": "cos"}],
    }
    f = field_from_dict(doc)
    assert isinstance(f, AnalyticEigenfunction)
    assert f.lam == pytest.approx(4 * PI**2 * 10)
    assert field_to_dict(f)["modes"][0]["ny"] == 3
    f2 = field_from_json(json.dumps(field_to_dict(f)))
    assert f2.value(0.1, 0.2) == pytest.approx(f.value(0.1, 0.2), rel=1e-15)


def test_json_grid_field():
    f = torus_cosine(1, 1)
    g = f.sample(16, 16)
    doc = field_to_dict(g)
    g2 = field_from_dict(doc)
    assert g2.value(0.3, 0.7) == pytest.approx(g.value(0.3, 0.7), rel=1e-12)


def test_json_errors():
    with pytest.raises(FieldFormatError):
        field_from_json("{not json")
    with pytest.raises(FieldFormatError):
        field_from_dict({"domain": {"kind": "sphere"}})
    with pytest.raises(FieldFormatError):
        field_from_dict({"domain": {"kind": "torus"}})


def test_torus_min_image_distance():
    dom = DomainSpec(TORUS, 1.0, 1.0)
    assert dom.distance((0.05, 0.0), (0.95, 0.0)) == pytest.approx(0.1)
    assert dom.distance((0.0, 0.0), (0.5, 0.0)) == pytest.approx(0.5)
