"""Flow integration against analytically known basins and separatrices.

For cos(2pi x)cos(2pi y) the separatrices are the exact diagonals: on the
segment (1/4+t, 1/4-t) the function equals -sin^2(2pi t), so the descending
legs of the saddle (1/4,1/4) run to the minima (1/2,0) and (0,1/2) and the
ascending legs to the maxima (1/2,1/2) and (0,0).
"""

import numpy as np
import pytest

from neumann_domains.errors import NoSaddles
from neumann_domains.field import rectangle_sine, stern_field, torus_cosine
from neumann_domains.flow import (
    ASCENDING,
    DESCENDING,
    FlowOptions,
    FlowPath,
    NeumannLineSet,
    build_neumann_line_set,
    integrate_flow,
    interlacing_alternates,
    right_angle_deviation,
    terminal_labels,
    trace_saddle_separatrices,
)
from neumann_domains.morse import find_critical_points, morse_smale_check


@pytest.fixture(scope="module")
def basic():
    f = torus_cosine(1, 1)
    cs = find_critical_points(f)
    return f, cs, FlowOptions.for_field(f)


def _terminus_at(path, x, y, tol=1e-6):
    return abs(path.terminus_point[0] % 1.0 - x) < tol and abs(
        path.terminus_point[1] % 1.0 - y
    ) < tol


def test_descending_reaches_quadrant_minimum(basic):
    f, cs, opts = basic
    path = integrate_flow(f, (0.3, 0.1), DESCENDING, cs, opts)
    assert path.terminus_kind == "minimum"
    assert _terminus_at(path, 0.5, 0.0)


def test_ascending_reaches_origin_maximum(basic):
    f, cs, opts = basic
    path = integrate_flow(f, (0.125, 0.125), ASCENDING, cs, opts)
    assert path.terminus_kind == "maximum"
    assert _terminus_at(path, 0.0, 0.0)


def test_descending_to_dirichlet_wall():
    f = rectangle_sine(1, 1)
    cs = find_critical_points(f)
    opts = FlowOptions.for_field(f)
    path = integrate_flow(f, (0.5, 0.1), DESCENDING, cs, opts)
    assert path.terminus_kind == "boundary"
    assert path.terminus_point[1] == pytest.approx(0.0, abs=1e-9)


def test_start_at_critical_point_rejected(basic):
    f, cs, opts = basic
    with pytest.raises(ValueError):
        integrate_flow(f, (0.0, 0.0), DESCENDING, cs, opts)


def test_monotone_along_paths(basic):
    f, cs, opts = basic
    rng = np.random.default_rng(2)
    for _ in range(20):
        start = rng.uniform(0.02, 0.98, 2)
        gx, gy = f.gradient(*start)
        if np.hypot(gx, gy) < 1e-3:
            continue
        for direction in (DESCENDING, ASCENDING):
            path = integrate_flow(f, start, direction, cs, opts)
            assert path.monotonicity_violation() <= opts.ode_tol * f.amplitude_scale()


def test_separatrix_quadruple(basic):
    f, cs, opts = basic
    idx = next(
        i for i, s in enumerate(cs.saddles)
        if abs(s.x - 0.25) < 1e-6 and abs(s.y - 0.25) < 1e-6
    )
    legs = trace_saddle_separatrices(f, idx, cs, opts)
    assert len(legs) == 4
    down = [p for p in legs if p.direction == DESCENDING]
    up = [p for p in legs if p.direction == ASCENDING]
    assert len(down) == 2 and len(up) == 2
    down_t = {(round(p.terminus_point[0] % 1, 4), round(p.terminus_point[1] % 1, 4)) for p in down}
    up_t = {(round(p.terminus_point[0] % 1, 4), round(p.terminus_point[1] % 1, 4)) for p in up}
    assert down_t == {(0.5, 0.0), (0.0, 0.5)}
    assert up_t == {(0.0, 0.0), (0.5, 0.5)}
    # legs start at the saddle itself
    for p in legs:
        assert np.allclose(p.points[0], [0.25, 0.25])
    # initial directions pairwise orthogonal across the two families
    d = down[0].points[1] - down[0].points[0]
    u = up[0].points[1] - up[0].points[0]
    assert abs(d @ u) / (np.linalg.norm(d) * np.linalg.norm(u)) < 1e-9


def test_separatrix_stays_on_diagonal(basic):
    # the descending leg from (1/4,1/4) toward (1/2,0) satisfies x+y = 1/2
    f, cs, opts = basic
    idx = next(
        i for i, s in enumerate(cs.saddles)
        if abs(s.x - 0.25) < 1e-6 and abs(s.y - 0.25) < 1e-6
    )
    legs = trace_saddle_separatrices(f, idx, cs, opts)
    for p in legs:
        if p.direction == DESCENDING:
            assert np.max(np.abs(p.points.sum(axis=1) - 0.5)) < 1e-6


def test_corner_saddle_single_leg():
    f = rectangle_sine(1, 1)
    cs = find_critical_points(f)
    opts = FlowOptions.for_field(f)
    idx = next(i for i, s in enumerate(cs.saddles) if s.x == 0.0 and s.y == 0.0)
    legs = trace_saddle_separatrices(f, idx, cs, opts)
    assert len(legs) == 1
    assert legs[0].direction == ASCENDING
    assert _terminus_at(legs[0], 0.5, 0.5)


def test_wall_saddle_two_legs():
    f = rectangle_sine(2, 1)
    cs = find_critical_points(f)
    opts = FlowOptions.for_field(f)
    idx = next(
        i for i, s in enumerate(cs.saddles)
        if abs(s.x - 0.5) < 1e-6 and s.y == 0.0
    )
    legs = trace_saddle_separatrices(f, idx, cs, opts)
    assert len(legs) == 2
    kinds = {p.direction: p for p in legs}
    assert set(kinds) == {ASCENDING, DESCENDING}
    assert kinds[ASCENDING].terminus_kind == "maximum"
    assert kinds[DESCENDING].terminus_kind == "minimum"


def test_line_set_counts(basic):
    f, cs, opts = basic
    nls = build_neumann_line_set(f, cs, opts)
    paths = list(nls.all_paths())
    assert len(paths) == 16
    # every extremum is hit by exactly 4 legs
    from collections import Counter

    hits = Counter(p.terminus_id for p in paths)
    assert len(hits) == 4
    assert all(v == 4 for v in hits.values())
    # closure: termini are critical points, never free interior points
    assert all(p.terminus_kind in ("minimum", "maximum") for p in paths)
    assert not nls.saddle_connections
    assert morse_smale_check(cs, nls)


def test_empty_saddles_guard(basic):
    f, cs, opts = basic
    from neumann_domains.morse import CriticalSet

    empty = CriticalSet(cs.minima, [], cs.maxima)
    with pytest.raises(NoSaddles):
        build_neumann_line_set(f, empty, opts)


def test_right_angles(basic):
    f, cs, opts = basic
    nls = build_neumann_line_set(f, cs, opts)
    assert right_angle_deviation(nls) < 1e-6


def test_interlacing_at_zero_saddles(basic):
    f, cs, opts = basic
    for i, s in enumerate(cs.saddles):
        assert abs(s.value) < 1e-9
        assert interlacing_alternates(f, cs, i, radius=4 * opts.launch_eps)


def test_stern_symmetric_coefficient_degenerate():
    # at coefficient exactly 1 the corner Taylor term is (c-1) x y, so the
    # corner saddles degenerate and the field is rejected as non-Morse
    from neumann_domains.errors import DegenerateCriticalPoint

    with pytest.raises(DegenerateCriticalPoint):
        find_critical_points(stern_field(3, 1.0))


def test_stern_desk_scale_is_morse_smale():
    f = stern_field(3, 0.98)
    cs = find_critical_points(f)
    nls = build_neumann_line_set(f, cs)
    assert morse_smale_check(cs, nls)


def test_saddle_connection_flag_blocks_morse_smale(basic):
    f, cs, opts = basic
    nls = build_neumann_line_set(f, cs, opts)
    assert morse_smale_check(cs, nls)
    legs = nls.separatrices[0]
    fake = FlowPath(
        legs[0].points, legs[0].values, DESCENDING,
        "saddle", legs[0].points[-1], cs.saddle_global_id(1), cs.saddle_global_id(0),
    )
    nls.add(0, [fake] + legs[1:])
    assert not morse_smale_check(cs, nls)


def test_terminal_labels_quadrants(basic):
    f, cs, opts = basic
    pts = np.array([[0.3, 0.1], [0.1, 0.3], [0.6, 0.6], [0.125, 0.125]])
    down = terminal_labels(f, cs, pts, DESCENDING, cell=1 / 256, opts=opts)
    up = terminal_labels(f, cs, pts, ASCENDING, cell=1 / 256, opts=opts)
    minima = [(round(c.x, 4), round(c.y, 4)) for c in cs.minima]
    maxima = [(round(c.x, 4), round(c.y, 4)) for c in cs.maxima]
    assert minima[down[0]] == (0.5, 0.0)
    assert minima[down[1]] == (0.0, 0.5)
    assert maxima[up[2]] == (0.5, 0.5)
    assert maxima[up[3]] == (0.0, 0.0)
    # batch agrees with one-at-a-time integration off the separatrices
    for p, lbl in zip(pts[:2], down[:2]):
        ref = integrate_flow(f, p, DESCENDING, cs, opts)
        assert np.allclose(cs.minima[lbl].point, np.mod(ref.terminus_point, 1.0))
    # (0.125, 0.125) lies on the stable manifold of the saddle: descending
    # flow runs into the saddle ball and the point is a line cell
    assert down[3] == -2


def test_terminal_labels_boundary_exit():
    f = rectangle_sine(1, 1)
    cs = find_critical_points(f)
    opts = FlowOptions.for_field(f)
    pts = np.array([[0.5, 0.1], [0.5, 0.62]])
    down = terminal_labels(f, cs, pts, DESCENDING, cell=1 / 256, opts=opts)
    up = terminal_labels(f, cs, pts, ASCENDING, cell=1 / 256, opts=opts)
    assert list(down) == [-1, -1]  # no minima: everything drains to the wall
    assert list(up) == [0, 0]
