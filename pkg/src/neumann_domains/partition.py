"""Neumann-domain and nodal-domain partitions of a raster.

Each raster cell center is flowed to its descending and ascending limits;
cells sharing the same (minimum, maximum) pair form Neumann domains (with
one slot open for Dirichlet-wall exits on rectangles), cells whose flow
runs into a saddle form the Neumann-line band.  Nodal domains are the sign
components of the same raster and nodal lines come from marching squares.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage
from skimage import measure

from .errors import ResolutionTooCoarse
from .flow import (
    ASCENDING,
    DESCENDING,
    LABEL_BOUNDARY,
    LABEL_LINE,
    LABEL_UNRESOLVED,
    FlowOptions,
    NeumannLineSet,
    build_neumann_line_set,
    terminal_labels,
)
from .morse import CriticalSet
from . import raster

INNER = "inner"
BOUNDARY_MIN = "boundary_min"
BOUNDARY_MAX = "boundary_max"

NODAL_TOL = 1e-9  # relative sign threshold


@dataclass
class NeumannDomain:
    """One connected Neumann domain on the raster.

    ``p`` indexes cs.minima (None for wall-fed domains of a maximum),
    ``q`` indexes cs.maxima likewise; ``cells`` are (i, j) raster indices.
    The nodal arc and its boundary hits are attached by
    ``attach_nodal_arcs``.
    """

    id: int
    kind: str
    p: int | None
    q: int | None
    cells: np.ndarray
    mask: np.ndarray
    nodal_arcs: list = dc_field(default_factory=list)
    arc_boundary_hits: int = 0
    saddles_on_boundary: list = dc_field(default_factory=list)

    @property
    def ncells(self) -> int:
        return len(self.cells)


@dataclass
class NodalDomain:
    id: int
    sign: int
    cells: np.ndarray


class Partition:
    """Full partition data for one field at one raster resolution."""

    def __init__(self, f, cs, nls, resolution, domains, nodal_domains,
                 nodal_lines, band_mask, values, unresolved_cells, opts):
        self.field = f
        self.critical_set: CriticalSet = cs
        self.neumann_line_set: NeumannLineSet = nls
        self.resolution = resolution
        self.domains: list[NeumannDomain] = domains
        self.nodal_domains: list[NodalDomain] = nodal_domains
        self.nodal_lines: list[np.ndarray] = nodal_lines
        self.band_mask = band_mask
        self.values = values
        self.unresolved_cells = unresolved_cells
        self.opts = opts
        self.hx = f.domain.Lx / resolution
        self.hy = f.domain.Ly / resolution

    @property
    def mu(self) -> int:
        return len(self.domains)

    @property
    def nu(self) -> int:
        return len(self.nodal_domains)

    @property
    def degrees(self) -> dict:
        """Number of Neumann domains sharing each extremum."""
        deg = {}
        for d in self.domains:
            if d.p is not None:
                key = ("minimum", d.p)
                deg[key] = deg.get(key, 0) + 1
            if d.q is not None:
                key = ("maximum", d.q)
                deg[key] = deg.get(key, 0) + 1
        return deg

    def cell_centers(self, cells) -> np.ndarray:
        return np.column_stack(
            [(cells[:, 0] + 0.5) * self.hx, (cells[:, 1] + 0.5) * self.hy]
        )

    def inner_domains(self):
        return [d for d in self.domains if d.kind == INNER]

    def report(self) -> dict:
        doc = {
            "mu": self.mu,
            "nu": self.nu,
            "resolution": self.resolution,
            "lambda": self.field.lam,
            "critical_points": self.critical_set.to_json(),
            "counts": dict(
                zip(("minima", "saddles", "maxima"), self.critical_set.counts())
            ),
            "degrees": {
                f"{kind}:{idx}": v for (kind, idx), v in sorted(self.degrees.items())
            },
            "unresolved_cells": self.unresolved_cells,
            "domains": [
                {
                    "id": d.id,
                    "kind": d.kind,
                    "p": d.p,
                    "q": d.q,
                    "area": d.ncells * self.hx * self.hy,
                    "cells": d.ncells,
                    "saddles": d.saddles_on_boundary,
                }
                for d in self.domains
            ],
        }
        return doc


def label_by_flow(f, cs: CriticalSet, resolution: int,
                  opts: FlowOptions = None, nls: NeumannLineSet = None) -> Partition:
    """Build the Neumann-domain partition by per-cell flow labeling.

    Every cell center is integrated in both flow directions; the label pair
    determines the Neumann domain, saddle-bound trajectories mark the
    Neumann-line band, and ambiguous cells inherit the majority label of
    their 8-neighborhood.  Raises ResolutionTooCoarse if more than 1% of
    the raster stays unresolved before the fallback.
    """
    if not cs.is_morse:
        raise ValueError("partitioning requires a Morse critical set")
    if resolution < 64:
        raise ValueError("resolution must be at least 64")
    if opts is None:
        opts = FlowOptions.for_field(f)
    if nls is None:
        nls = build_neumann_line_set(f, cs, opts)

    N = int(resolution)
    dom = f.domain
    hx, hy = dom.Lx / N, dom.Ly / N
    ii, jj = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    centers = np.column_stack([(ii.ravel() + 0.5) * hx, (jj.ravel() + 0.5) * hy])
    cell = min(hx, hy)

    down = terminal_labels(f, cs, centers, DESCENDING, cell, opts).reshape(N, N)
    up = terminal_labels(f, cs, centers, ASCENDING, cell, opts).reshape(N, N)

    unresolved = (down == LABEL_UNRESOLVED) | (up == LABEL_UNRESOLVED)
    n_unresolved = int(np.sum(unresolved))
    if n_unresolved > 0.01 * N * N:
        raise ResolutionTooCoarse(
            f"{n_unresolved} of {N * N} cells unresolved by the flow labeling"
        )

    band = (down == LABEL_LINE) | (up == LABEL_LINE)

    # cells whose center sits within the capture radius of a separatrix
    # polyline belong to the Neumann-line band, not to any domain
    band |= _band_near_polylines(nls, f, N, hx, hy, opts.capture_radius)

    down, up = _majority_fill(down, up, band, dom.is_torus)
    band |= (down == LABEL_UNRESOLVED) | (up == LABEL_UNRESOLVED)
    band |= (down == LABEL_LINE) | (up == LABEL_LINE)
    # a cell with both limits on the wall has no domain type; treat as band
    band |= (down == LABEL_BOUNDARY) & (up == LABEL_BOUNDARY)

    domains = _assemble_domains(down, up, band, len(cs.maxima), dom.is_torus)

    values = f.value(centers[:, 0], centers[:, 1], check=False).reshape(N, N)
    nodal_domains, nodal_lines = _extract_nodal_from_values(
        values, dom, hx, hy, dom.is_torus
    )

    part = Partition(
        f, cs, nls, N, domains, nodal_domains, nodal_lines,
        band, values, n_unresolved, opts,
    )
    _attach_boundary_saddles(part)
    attach_nodal_arcs(part)
    return part


def _band_near_polylines(nls, f, N, hx, hy, capture):
    """Mark cells whose center lies within ``capture`` of a separatrix.

    Segments are no longer than half a cell, so checking the 3x3 block of
    cells around each segment midpoint covers every center within reach.
    """
    band = np.zeros((N, N), dtype=bool)
    segs = nls.segments()
    if segs.shape[0] == 0:
        return band
    dom = f.domain
    a, b = segs[:, 0], segs[:, 1]
    mid = 0.5 * (a + b)
    mi = np.floor(mid[:, 0] / hx - 0.5).astype(np.int64)
    mj = np.floor(mid[:, 1] / hy - 0.5).astype(np.int64)
    for di in (-1, 0, 1, 2):
        for dj in (-1, 0, 1, 2):
            ci = mi + di
            cj = mj + dj
            cx = (ci + 0.5) * hx
            cy = (cj + 0.5) * hy
            dx = cx - mid[:, 0]
            dy = cy - mid[:, 1]
            if dom.is_torus:
                dx -= dom.Lx * np.round(dx / dom.Lx)
                dy -= dom.Ly * np.round(dy / dom.Ly)
            px = dx + (mid[:, 0] - a[:, 0])
            py = dy + (mid[:, 1] - a[:, 1])
            ex = b[:, 0] - a[:, 0]
            ey = b[:, 1] - a[:, 1]
            ee = np.maximum(ex**2 + ey**2, 1e-300)
            t = np.clip((px * ex + py * ey) / ee, 0.0, 1.0)
            d2 = (px - t * ex) ** 2 + (py - t * ey) ** 2
            close = d2 < capture * capture
            if np.any(close):
                ci2 = np.mod(ci[close], N) if dom.is_torus else ci[close]
                cj2 = np.mod(cj[close], N) if dom.is_torus else cj[close]
                ok = (ci2 >= 0) & (ci2 < N) & (cj2 >= 0) & (cj2 < N)
                band[ci2[ok], cj2[ok]] = True
    return band


def _majority_fill(down, up, band, periodic):
    """Ambiguous cells inherit the most common label pair among their
    8-neighbors; bounded and deterministic."""
    N = down.shape[0]
    for _ in range(3):
        todo = np.argwhere(
            ((down == LABEL_UNRESOLVED) | (up == LABEL_UNRESOLVED)) & ~band
        )
        if len(todo) == 0:
            break
        newd = down.copy()
        newu = up.copy()
        for i, j in todo:
            votes = {}
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if di == dj == 0:
                        continue
                    ni, nj = i + di, j + dj
                    if periodic:
                        ni %= N
                        nj %= N
                    elif not (0 <= ni < N and 0 <= nj < N):
                        continue
                    a, b = down[ni, nj], up[ni, nj]
                    if a >= LABEL_BOUNDARY and b >= LABEL_BOUNDARY and not (
                        a == b == LABEL_BOUNDARY
                    ):
                        votes[(a, b)] = votes.get((a, b), 0) + 1
            if votes:
                (a, b), _ = max(votes.items(), key=lambda kv: (kv[1], kv[0]))
                newd[i, j], newu[i, j] = a, b
        down, up = newd, newu
    return down, up


def _assemble_domains(down, up, band, nmax, periodic):
    """Connected components of equal (p, q) label pairs."""
    valid = ~band & (down >= LABEL_BOUNDARY) & (up >= LABEL_BOUNDARY)
    key = np.where(valid, (down + 1) * (nmax + 2) + (up + 1), -1)
    domains = []
    for k in np.unique(key[key >= 0]):
        m = key == k
        lab, n = raster.periodic_components(m, periodic)
        p = int(k // (nmax + 2)) - 1
        q = int(k % (nmax + 2)) - 1
        for c in range(1, n + 1):
            cells = np.argwhere(lab == c)
            kind = INNER
            if p < 0:
                kind = BOUNDARY_MAX
            elif q < 0:
                kind = BOUNDARY_MIN
            domains.append(
                NeumannDomain(
                    id=-1,
                    kind=kind,
                    p=p if p >= 0 else None,
                    q=q if q >= 0 else None,
                    cells=cells,
                    mask=(lab == c),
                )
            )
    domains.sort(key=lambda d: (int(d.cells[:, 0].min()) * 10**6 + int(d.cells[:, 1].min())))
    domains.sort(key=lambda d: (d.kind, -1 if d.p is None else d.p, -1 if d.q is None else d.q))
    for i, d in enumerate(domains):
        d.id = i
    return domains


def extract_nodal(f, resolution: int):
    """Nodal domains (sign components) and nodal lines (marching squares)."""
    N = int(resolution)
    dom = f.domain
    hx, hy = dom.Lx / N, dom.Ly / N
    ii, jj = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    values = f.value(
        ((ii.ravel() + 0.5) * hx), ((jj.ravel() + 0.5) * hy), check=False
    ).reshape(N, N)
    return _extract_nodal_from_values(values, dom, hx, hy, dom.is_torus)


def _extract_nodal_from_values(values, dom, hx, hy, periodic):
    tol = NODAL_TOL * np.max(np.abs(values))
    nodal_domains = []
    nid = 0
    for sign in (1, -1):
        m = values * sign > tol
        lab, n = raster.periodic_components(m, periodic)
        for c in range(1, n + 1):
            nodal_domains.append(NodalDomain(nid, sign, np.argwhere(lab == c)))
            nid += 1
    nodal_lines = _nodal_polylines(values, dom, hx, hy, periodic)
    return nodal_domains, nodal_lines


def _nodal_polylines(values, dom, hx, hy, periodic):
    """Zero-level polylines in physical coordinates, stitched across the
    torus seam (the padded grid splits seam-crossing lines)."""
    grid = np.pad(values, ((0, 1), (0, 1)), mode="wrap") if periodic else values
    lines = []
    for c in measure.find_contours(grid, 0.0):
        xy = np.column_stack([(c[:, 0] + 0.5) * hx, (c[:, 1] + 0.5) * hy])
        lines.append(xy)
    if periodic:
        lines = _stitch(lines, dom)
    return lines


def _stitch(lines, dom):
    def keyof(p):
        return (round(p[0] % dom.Lx, 9) % dom.Lx, round(p[1] % dom.Ly, 9) % dom.Ly)

    changed = True
    while changed:
        changed = False
        for i in range(len(lines)):
            if lines[i] is None:
                continue
            for j in range(len(lines)):
                if i == j or lines[j] is None:
                    continue
                a, b = lines[i], lines[j]
                pairs = {
                    (keyof(a[-1]), keyof(b[0])): lambda: np.vstack([a, b[1:]]),
                    (keyof(a[-1]), keyof(b[-1])): lambda: np.vstack([a, b[::-1][1:]]),
                    (keyof(a[0]), keyof(b[-1])): lambda: np.vstack([b, a[1:]]),
                    (keyof(a[0]), keyof(b[0])): lambda: np.vstack([b[::-1], a[1:]]),
                }
                for (ka, kb), join in pairs.items():
                    if ka == kb:
                        lines[i] = join()
                        lines[j] = None
                        changed = True
                        break
                if changed:
                    break
            if changed:
                break
    return [l for l in lines if l is not None]


def attach_nodal_arcs(part: Partition) -> Partition:
    """Clip nodal lines to each inner Neumann domain.

    The per-domain record carries the clipped polyline pieces and the count
    of boundary hits (run endpoints).  Domains whose clipped nodal set has
    other than one component keep the pieces; the theorem checker consumes
    the counts as flags.
    """
    N = part.resolution
    dom = part.field.domain
    periodic = dom.is_torus
    cs = part.critical_set
    spos = cs.positions(cs.saddles)
    saddle_clear = 3.0 * max(part.hx, part.hy)
    for d in part.domains:
        if d.kind != INNER:
            continue
        arcs = []
        hits = 0
        for line in part.nodal_lines:
            ci = np.round(line[:, 0] / part.hx - 0.5).astype(np.int64)
            cj = np.round(line[:, 1] / part.hy - 0.5).astype(np.int64)
            if periodic:
                ci %= N
                cj %= N
            else:
                ci = np.clip(ci, 0, N - 1)
                cj = np.clip(cj, 0, N - 1)
            # vertex state: 2 inside the mask, 1 on the line band but away
            # from every saddle (bridgeable: an arc leaves its domain only
            # at a saddle), 0 elsewhere
            state = np.zeros(len(line), dtype=np.int8)
            state[d.mask[ci, cj]] = 2
            on_band = part.band_mask[ci, cj] & (state == 0)
            if np.any(on_band) and len(spos):
                dx = line[on_band, 0][:, None] - spos[None, :, 0]
                dy = line[on_band, 1][:, None] - spos[None, :, 1]
                if periodic:
                    dx -= dom.Lx * np.round(dx / dom.Lx)
                    dy -= dom.Ly * np.round(dy / dom.Ly)
                far = np.min(np.hypot(dx, dy), axis=1) > saddle_clear
                tmp = np.zeros(len(line), dtype=bool)
                tmp[np.flatnonzero(on_band)[far]] = True
                state[tmp] = 1
            dxy = dom.delta(*(line[0] - line[-1]))
            closed_loop = np.hypot(*dxy) < 1e-9 * dom.min_extent
            for r0, r1 in _runs(state >= 1, closed_loop):
                n = len(line)
                span = np.arange(r0, r1)
                states = state[span % n]
                core = np.flatnonzero(states == 2)
                if core.size < 2:
                    continue
                a, b = span[core[0]], span[core[-1]] + 1
                seg = line[a:b] if b <= n else np.vstack(
                    [line[a:], line[1 : b - n + 1]]
                )
                arcs.append(seg)
                whole = (b - a) >= n
                # open polylines end on the wall, which is domain boundary;
                # only a closed loop swallowed whole has no boundary contact
                hits += 0 if (whole and closed_loop) else 2
        d.nodal_arcs = arcs
        d.arc_boundary_hits = hits if arcs else 0
    return part


def _dilate(mask, periodic, iterations=1):
    """8-neighborhood dilation, wrapping on the torus."""
    out = mask.copy()
    for _ in range(iterations):
        grown = out.copy()
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == dj == 0:
                    continue
                if periodic:
                    grown |= np.roll(np.roll(out, di, 0), dj, 1)
                else:
                    shifted = np.zeros_like(out)
                    src_i = slice(max(0, -di), out.shape[0] - max(0, di))
                    dst_i = slice(max(0, di), out.shape[0] - max(0, -di))
                    src_j = slice(max(0, -dj), out.shape[1] - max(0, dj))
                    dst_j = slice(max(0, dj), out.shape[1] - max(0, -dj))
                    shifted[dst_i, dst_j] = out[src_i, src_j]
                    grown |= shifted
        out = grown
    return out


def _runs(inside, closed):
    """Maximal index runs of True; on closed polylines the first and last
    runs join across the wrap."""
    n = len(inside)
    idx = np.flatnonzero(inside)
    if idx.size == 0:
        return []
    if idx.size == n:
        return [(0, n)]
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = [idx[0]] + [idx[b + 1] for b in breaks]
    ends = [idx[b] + 1 for b in breaks] + [idx[-1] + 1]
    runs = list(zip(starts, ends))
    if closed and len(runs) > 1 and runs[0][0] == 0 and runs[-1][1] == n:
        first = runs.pop(0)
        last = runs.pop()
        runs.append((last[0], last[1] + first[1]))  # wraps past n
    return runs


def _attach_boundary_saddles(part: Partition):
    """Saddles within the adjacency distance of each domain's cells."""
    cs = part.critical_set
    dom = part.field.domain
    spos = cs.positions(cs.saddles)
    if spos.size == 0:
        return
    tol = 3.0 * max(part.hx, part.hy)
    for d in part.domains:
        centers = part.cell_centers(d.cells)
        near = []
        for k in range(len(spos)):
            dx = centers[:, 0] - spos[k, 0]
            dy = centers[:, 1] - spos[k, 1]
            if dom.is_torus:
                dx -= dom.Lx * np.round(dx / dom.Lx)
                dy -= dom.Ly * np.round(dy / dom.Ly)
            if np.min(dx * dx + dy * dy) < tol * tol:
                near.append(k)
        d.saddles_on_boundary = near
