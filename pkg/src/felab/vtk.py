"""Legacy ASCII VTK output for quad/hex meshes, and a parser for the same subset."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatch, VTKFormatError
from .grid.triangulation import Triangulation

VTK_CELL_TYPE = {2: 9, 3: 12}
# lexicographic corner numbering -> VTK counterclockwise convention
VTK_CORNER_ORDER = {2: (0, 1, 3, 2), 3: (0, 1, 3, 2, 4, 5, 7, 6)}


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def vtk_write(tria: Triangulation, path, point_data: dict | None = None, cell_data: dict | None = None) -> None:
    """Write the active cells of ``tria`` with optional scalar fields.

    Points are all mesh vertices (index = vertex id); point fields have one
    value per vertex, cell fields one per active cell in iteration order.
    """
    point_data = point_data or {}
    cell_data = cell_data or {}
    dim = tria.dim
    verts = tria.vertices
    cells = tria.active_cells()
    for name, values in point_data.items():
        if len(values) != len(verts):
            raise LengthMismatch(f"point field {name!r} has {len(values)} values for {len(verts)} points")
    for name, values in cell_data.items():
        if len(values) != len(cells):
            raise LengthMismatch(f"cell field {name!r} has {len(values)} values for {len(cells)} cells")
    order = list(VTK_CORNER_ORDER[dim])
    nc = 2**dim
    lines = ["# vtk DataFile Version 3.0", "felab output", "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(verts)} double"]
    pad = np.zeros((len(verts), 3))
    pad[:, :dim] = verts
    lines.extend(" ".join(_fmt(c) for c in p) for p in pad)
    lines.append(f"CELLS {len(cells)} {len(cells) * (nc + 1)}")
    for cell in cells:
        v = cell.vertex_indices[order]
        lines.append(f"{nc} " + " ".join(str(int(i)) for i in v))
    lines.append(f"CELL_TYPES {len(cells)}")
    lines.extend(str(VTK_CELL_TYPE[dim]) for _ in cells)
    for keyword, fields, n in (("POINT_DATA", point_data, len(verts)), ("CELL_DATA", cell_data, len(cells))):
        if not fields:
            continue
        lines.append(f"{keyword} {n}")
        for name, values in fields.items():
            if any(ch.isspace() for ch in name) or not name:
                raise ValueError(f"field name {name!r} must be a non-empty word")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(x) for x in np.asarray(values, dtype=float))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class VTKData:
    points: np.ndarray
    cells: list = field(default_factory=list)
    cell_types: list = field(default_factory=list)
    point_data: dict = field(default_factory=dict)
    cell_data: dict = field(default_factory=dict)


class _Lines:
    def __init__(self, text):
        self.lines = text.split("\n")
        self.pos = 0

    def next(self, what):
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line:
                return line
        raise VTKFormatError(f"unexpected end of file while reading {what}")

    def fail(self, msg):
        raise VTKFormatError(f"line {self.pos}: {msg}")


def _int(tok, src, what):
    try:
        return int(tok)
    except ValueError:
        src.fail(f"expected integer {what}, got {tok!r}")


def _float(tok, src, what):
    try:
        return float(tok)
    except ValueError:
        src.fail(f"expected number in {what}, got {tok!r}")


def vtk_read(path) -> VTKData:
    """Parse a legacy ASCII unstructured-grid file as written by :func:`vtk_write`."""
    with open(path, encoding="ascii") as fh:
        src = _Lines(fh.read())
    if src.next("header") != "# vtk DataFile Version 3.0":
        src.fail("missing '# vtk DataFile Version 3.0' header")
    src.next("title")
    if src.next("format") != "ASCII":
        src.fail("only ASCII files are supported")
    if src.next("dataset") != "DATASET UNSTRUCTURED_GRID":
        src.fail("expected DATASET UNSTRUCTURED_GRID")
    head = src.next("POINTS").split()
    if len(head) != 3 or head[0] != "POINTS":
        src.fail("expected 'POINTS n type'")
    n_points = _int(head[1], src, "point count")
    points = np.empty((n_points, 3))
    for i in range(n_points):
        toks = src.next("points").split()
        if len(toks) != 3:
            src.fail("points need 3 coordinates")
        points[i] = [_float(t, src, "POINTS") for t in toks]
    head = src.next("CELLS").split()
    if len(head) != 3 or head[0] != "CELLS":
        src.fail("expected 'CELLS n size'")
    n_cells, size = _int(head[1], src, "cell count"), _int(head[2], src, "cell list size")
    cells, total = [], 0
    for _ in range(n_cells):
        toks = [_int(t, src, "connectivity") for t in src.next("cells").split()]
        if not toks or toks[0] != len(toks) - 1:
            src.fail("connectivity count does not match entries")
        if any(not 0 <= v < n_points for v in toks[1:]):
            src.fail("connectivity refers to a missing point")
        cells.append(toks[1:])
        total += len(toks)
    if total != size:
        src.fail(f"CELLS size {size} does not match {total} entries")
    head = src.next("CELL_TYPES").split()
    if len(head) != 2 or head[0] != "CELL_TYPES" or _int(head[1], src, "cell count") != n_cells:
        src.fail("expected 'CELL_TYPES n' matching the cell count")
    types = [_int(src.next("cell types"), src, "cell type") for _ in range(n_cells)]
    for t, c in zip(types, cells):
        if {9: 4, 12: 8}.get(t) != len(c):
            src.fail(f"cell type {t} with {len(c)} vertices")
    data = VTKData(points, cells, types)
    while True:
        try:
            line = src.next("data")
        except VTKFormatError:
            break
        toks = line.split()
        if toks[0] not in ("POINT_DATA", "CELL_DATA") or len(toks) != 2:
            src.fail(f"unexpected section {toks[0]!r}")
        n = _int(toks[1], src, "data count")
        target = data.point_data if toks[0] == "POINT_DATA" else data.cell_data
        if n != (n_points if toks[0] == "POINT_DATA" else n_cells):
            src.fail(f"{toks[0]} count {n} does not match")
        # fields until the next section keyword or end of file
        while src.pos < len(src.lines):
            save = src.pos
            try:
                line = src.next("field")
            except VTKFormatError:
                break
            toks = line.split()
            if toks[0] in ("POINT_DATA", "CELL_DATA"):
                src.pos = save
                break
            if toks[0] != "SCALARS" or len(toks) not in (3, 4):
                src.fail("expected SCALARS")
            if src.next("lookup table").split()[0] != "LOOKUP_TABLE":
                src.fail("expected LOOKUP_TABLE")
            target[toks[1]] = np.array([_float(src.next("scalars"), src, toks[1]) for _ in range(n)])
    return data


def parse_vtk(path) -> VTKData:
    return vtk_read(path)
