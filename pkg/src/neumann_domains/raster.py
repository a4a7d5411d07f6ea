"""Raster-mask utilities shared by the partition, theorem and geometry code:
4-connected components with optional periodic wrap, planar lifts of torus
masks, boundary-loop tracing and the cell-complex Euler characteristic."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import LiftFailure


def periodic_components(mask: np.ndarray, periodic: bool):
    """4-connected components of a boolean grid; labels start at 1.

    With ``periodic`` the left/right and top/bottom edges are glued.
    Returns (labels, count).
    """
    lab, n = ndimage.label(mask)
    if not periodic or n == 0:
        return lab, n
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for a, b in zip(lab[0, :], lab[-1, :]):
        if a and b:
            union(int(a), int(b))
    for a, b in zip(lab[:, 0], lab[:, -1]):
        if a and b:
            union(int(a), int(b))
    roots = {}
    remap = np.zeros(n + 1, dtype=lab.dtype)
    nxt = 0
    for c in range(1, n + 1):
        r = find(c)
        if r not in roots:
            nxt += 1
            roots[r] = nxt
        remap[c] = roots[r]
    return remap[lab], nxt


def lift_cells(cells: np.ndarray, shape, periodic: bool) -> np.ndarray:
    """Planar lift of a 4-connected torus cell set.

    BFS with periodic stepping assigns unwrapped integer coordinates; a cell
    reachable with two different offsets means the set wraps the torus, in
    which case no lift exists and LiftFailure is raised.
    """
    cells = np.asarray(cells)
    if not periodic:
        return cells.copy()
    nx, ny = shape
    index = {(int(i), int(j)): k for k, (i, j) in enumerate(cells)}
    lifted = np.zeros_like(cells)
    seen = np.zeros(len(cells), dtype=bool)
    start = 0
    lifted[start] = cells[start]
    seen[start] = True
    stack = [start]
    while stack:
        k = stack.pop()
        i, j = int(cells[k, 0]), int(cells[k, 1])
        I, J = int(lifted[k, 0]), int(lifted[k, 1])
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            key = ((i + di) % nx, (j + dj) % ny)
            m = index.get(key)
            if m is None:
                continue
            cand = (I + di, J + dj)
            if seen[m]:
                if (int(lifted[m, 0]), int(lifted[m, 1])) != cand:
                    raise LiftFailure("cell set wraps around the torus")
            else:
                lifted[m] = cand
                seen[m] = True
                stack.append(m)
    if not np.all(seen):
        raise LiftFailure("cell set is not 4-connected")
    return lifted


def _boundary_edges(cellset):
    """Directed boundary edges (interior on the left), one per open side."""
    edges = []
    for i, j in cellset:
        if (i, j - 1) not in cellset:
            edges.append(((i, j), (i + 1, j)))
        if (i + 1, j) not in cellset:
            edges.append(((i + 1, j), (i + 1, j + 1)))
        if (i, j + 1) not in cellset:
            edges.append(((i + 1, j + 1), (i, j + 1)))
        if (i - 1, j) not in cellset:
            edges.append(((i, j + 1), (i, j)))
    return edges


def boundary_loops(lifted_cells: np.ndarray):
    """Closed boundary loops of a lifted cell set, as vertex index arrays.

    Loops are traced by always taking the sharpest left turn, which keeps
    pinch vertices (two boundary corners meeting at a point) resolved
    consistently with the interior-on-the-left orientation.
    """
    cellset = {(int(i), int(j)) for i, j in lifted_cells}
    edges = _boundary_edges(cellset)
    out_by_vertex = {}
    for e in edges:
        out_by_vertex.setdefault(e[0], []).append(e)
    unused = set(edges)
    loops = []
    while unused:
        e = next(iter(unused))
        loop = [e[0]]
        cur = e
        while True:
            unused.discard(cur)
            loop.append(cur[1])
            d = (cur[1][0] - cur[0][0], cur[1][1] - cur[0][1])
            prefer = (
                (-d[1], d[0]),  # left turn
                d,              # straight
                (d[1], -d[0]),  # right turn
                (-d[0], -d[1]),
            )
            nxt = None
            cands = out_by_vertex.get(cur[1], [])
            for want in prefer:
                for c in cands:
                    if c in unused and (
                        c[1][0] - c[0][0], c[1][1] - c[0][1]
                    ) == want:
                        nxt = c
                        break
                if nxt:
                    break
            if nxt is None:
                break
            cur = nxt
        loops.append(np.array(loop))
    return loops


def euler_characteristic(lifted_cells: np.ndarray) -> int:
    """V - E + F of the cell complex spanned by the (lifted) cells."""
    cells = {(int(i), int(j)) for i, j in lifted_cells}
    verts = set()
    edges = set()
    for i, j in cells:
        verts.update({(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)})
        edges.update(
            {
                ((i, j), (i + 1, j)),
                ((i, j + 1), (i + 1, j + 1)),
                ((i, j), (i, j + 1)),
                ((i + 1, j), (i + 1, j + 1)),
            }
        )
    return len(verts) - len(edges) + len(cells)


def boundary_cells(mask: np.ndarray, periodic: bool) -> np.ndarray:
    """Cells of the mask with at least one missing 4-neighbor."""
    if periodic:
        nb = (
            np.roll(mask, 1, 0).astype(int)
            + np.roll(mask, -1, 0)
            + np.roll(mask, 1, 1)
            + np.roll(mask, -1, 1)
        )
    else:
        nb = np.zeros(mask.shape, dtype=int)
        nb[1:, :] += mask[:-1, :]
        nb[:-1, :] += mask[1:, :]
        nb[:, 1:] += mask[:, :-1]
        nb[:, :-1] += mask[:, 1:]
    return np.argwhere(mask & (nb < 4))
