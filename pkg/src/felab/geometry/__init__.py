from .manifold import (
    blend_lattice,
    FLAT_MANIFOLD_ID,
    FlatManifold,
    Manifold,
    PolarManifold,
    TransfiniteChart,
    TransfiniteInterpolationManifold,
    straight_curve,
    transfinite_new_point,
)
from .tensor import contract, invert, is_invertible, point, tensor1, tensor2

flat_new_point = FlatManifold().new_point


def polar_new_point(center, points, weights):
    return PolarManifold(center).new_point(points, weights)


__all__ = [
    "FLAT_MANIFOLD_ID",
    "blend_lattice",
    "FlatManifold",
    "Manifold",
    "PolarManifold",
    "TransfiniteChart",
    "TransfiniteInterpolationManifold",
    "contract",
    "flat_new_point",
    "invert",
    "is_invertible",
    "point",
    "polar_new_point",
    "straight_curve",
    "tensor1",
    "tensor2",
    "transfinite_new_point",
]
