"""Coarse mesh generators."""
from __future__ import annotations

import itertools

import numpy as np

from ..errors import BadDomain
from ..geometry.manifold import FLAT_MANIFOLD_ID, PolarManifold, TransfiniteInterpolationManifold
from .triangulation import Triangulation

SHELL_POLAR_ID = 1
SHELL_TRANSFINITE_ID = 2


def create_hyper_cube(dim: int, lower: float = 0.0, upper: float = 1.0, subdivisions: int = 1) -> Triangulation:
    """Uniform ``subdivisions**dim`` grid of ``[lower, upper]^dim``.

    Boundary ids follow the face direction: 0 for x=lower, 1 for x=upper,
    2 for y=lower and so on.
    """
    if not lower < upper:
        raise BadDomain(f"empty interval [{lower}, {upper}]")
    if subdivisions < 1:
        raise BadDomain("need at least one subdivision")
    n = subdivisions
    coords = lower + (upper - lower) * np.arange(n + 1) / n
    coords[-1] = upper
    # vertices lexicographic, x fastest
    vertices = np.array([[coords[i] for i in reversed(idx)]
                         for idx in itertools.product(range(n + 1), repeat=dim)])

    def vid(idx):
        return sum(i * (n + 1) ** a for a, i in enumerate(idx))

    cells = []
    boundary = {}
    for k, idx in enumerate(reversed(t) for t in itertools.product(range(n), repeat=dim)):
        idx = tuple(idx)
        cells.append([vid([idx[a] + ((j >> a) & 1) for a in range(dim)]) for j in range(2**dim)])
        for a in range(dim):
            if idx[a] == 0:
                boundary[(k, 2 * a)] = 2 * a
            if idx[a] == n - 1:
                boundary[(k, 2 * a + 1)] = 2 * a + 1
    return Triangulation(dim, vertices, cells, boundary_ids=boundary)


def create_hyper_shell_2d(center=(0.0, 0.0), r_inner: float = 0.5, r_outer: float = 1.0,
                          n_cells: int = 4) -> Triangulation:
    """Annulus of ``n_cells`` curved cells.

    Both circles carry a polar manifold about ``center`` (boundary ids 0
    inner, 1 outer); cell interiors use transfinite interpolation. In each
    cell the x direction is radial and y runs counterclockwise.
    """
    if not 0 < r_inner < r_outer:
        raise BadDomain(f"need 0 < r_inner < r_outer, got {r_inner}, {r_outer}")
    if n_cells < 3:
        raise BadDomain("a shell needs at least 3 cells")
    c = np.asarray(center, dtype=float)
    angles = 2 * np.pi * np.arange(n_cells) / n_cells
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    vertices = np.concatenate([c + r_inner * dirs, c + r_outer * dirs])
    cells, boundary, face_man = [], {}, {}
    for k in range(n_cells):
        k1 = (k + 1) % n_cells
        cells.append([k, n_cells + k, k1, n_cells + k1])
        boundary[(k, 0)] = 0
        boundary[(k, 1)] = 1
        face_man[(k, 0)] = SHELL_POLAR_ID
        face_man[(k, 1)] = SHELL_POLAR_ID
    tria = Triangulation(2, vertices, cells, boundary_ids=boundary, face_manifold_ids=face_man,
                         cell_manifold_ids=np.full(n_cells, SHELL_TRANSFINITE_ID))
    tria.set_manifold(SHELL_POLAR_ID, PolarManifold(c))
    tria.set_manifold(SHELL_TRANSFINITE_ID, TransfiniteInterpolationManifold())
    return tria
