"""Coarse mesh input in JSON.

Layout::

    {
      "dim": 2,
      "vertices": [[0, 0], [1, 0], ...],
      "cells": [[0, 1, 2, 3], ...],            # lexicographic corner order
      "boundary_ids": {"0:1": 3, ...},         # "cell:face" -> id, default 0
      "manifolds": {
        "1": {"type": "polar", "params": {"center": [0, 0], "boundary_ids": [0]}},
        "2": {"type": "transfinite", "params": {"cells": [0, 1]}}
      }
    }

A flat or polar manifold is attached to every boundary face whose boundary
id is listed in its ``boundary_ids``; a transfinite manifold is attached to
the listed cells (all cells when omitted).
"""
from __future__ import annotations

import json
from pathlib import Path

from ..errors import MeshFormatError
from ..geometry.manifold import (
    FLAT_MANIFOLD_ID,
    FlatManifold,
    PolarManifold,
    TransfiniteInterpolationManifold,
)
from .triangulation import Triangulation

_TOP_KEYS = {"dim", "vertices", "cells", "boundary_ids", "manifolds"}
_MANIFOLD_KEYS = {"type", "params"}
_PARAM_KEYS = {
    "flat": {"boundary_ids"},
    "polar": {"center", "boundary_ids"},
    "transfinite": {"cells"},
}


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise MeshFormatError(f"{where}: expected an object")
    extra = sorted(set(obj) - allowed)
    if extra:
        raise MeshFormatError(f"{where}: unknown field '{extra[0]}'")


def triangulation_from_dict(data: dict) -> Triangulation:
    _reject_unknown(data, _TOP_KEYS, "mesh")
    for key in ("dim", "vertices", "cells"):
        if key not in data:
            raise MeshFormatError(f"mesh: missing field '{key}'")
    dim = data["dim"]
    if dim not in (1, 2, 3):
        raise MeshFormatError(f"dim: unsupported value {dim!r}")
    cells = data["cells"]
    for k, c in enumerate(cells):
        if len(c) != 2**dim:
            raise MeshFormatError(f"cells[{k}]: expected {2**dim} vertex indices")

    boundary = {}
    for desc, bid in (data.get("boundary_ids") or {}).items():
        try:
            k, f = (int(s) for s in desc.split(":"))
        except ValueError:
            raise MeshFormatError(f"boundary_ids: bad face descriptor '{desc}'") from None
        if not (0 <= k < len(cells) and 0 <= f < 2 * dim):
            raise MeshFormatError(f"boundary_ids: face '{desc}' out of range")
        if not isinstance(bid, int) or bid < 0:
            raise MeshFormatError(f"boundary_ids['{desc}']: ids must be non-negative integers")
        boundary[(k, f)] = bid

    try:
        tria = Triangulation(dim, data["vertices"], cells, boundary_ids=boundary)
    except ValueError as exc:
        raise MeshFormatError(f"mesh: {exc}") from None

    lev = tria.levels[0]
    for key, entry in (data.get("manifolds") or {}).items():
        where = f"manifolds['{key}']"
        try:
            mid = int(key)
        except ValueError:
            raise MeshFormatError(f"{where}: manifold ids must be integers") from None
        if mid < 0 or mid == FLAT_MANIFOLD_ID:
            raise MeshFormatError(f"{where}: invalid manifold id")
        _reject_unknown(entry, _MANIFOLD_KEYS, where)
        kind = entry.get("type")
        if kind not in _PARAM_KEYS:
            raise MeshFormatError(f"{where}.type: unknown manifold type {kind!r}")
        params = entry.get("params") or {}
        _reject_unknown(params, _PARAM_KEYS[kind], f"{where}.params")
        if kind == "transfinite":
            if dim != 2:
                raise MeshFormatError(f"{where}: transfinite interpolation needs dim 2")
            targets = params.get("cells", list(range(len(cells))))
            lev.manifold[targets] = mid
            tria.set_manifold(mid, TransfiniteInterpolationManifold())
            continue
        if kind == "polar":
            if "center" not in params or len(params["center"]) != dim:
                raise MeshFormatError(f"{where}.params.center: expected {dim} coordinates")
            manifold = PolarManifold(params["center"])
        else:
            manifold = FlatManifold()
        ids = set(params.get("boundary_ids", []))
        for k in range(lev.n):
            for f in range(2 * dim):
                if lev.boundary[k, f] in ids:
                    lev.face_manifold[k, f] = mid
        tria.set_manifold(mid, manifold)
    return tria


def read_coarse_mesh(path) -> Triangulation:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MeshFormatError(f"{path}: invalid JSON ({exc})") from None
    return triangulation_from_dict(data)
