"""Scalar functions of position, evaluated on arrays of points."""
from __future__ import annotations

import numpy as np


class ScalarFunction:
    """Base class. ``value`` and ``gradient`` take points of shape ``(n, d)``."""

    def value(self, points) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, points) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no gradient")

    def __call__(self, points):
        return self.value(points)


class FunctionFromCallable(ScalarFunction):
    def __init__(self, f, grad=None):
        self._f = f
        self._grad = grad

    def value(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.broadcast_to(np.asarray(self._f(pts), dtype=float), (len(pts),)).copy()

    def gradient(self, points):
        if self._grad is None:
            return super().gradient(points)
        return np.asarray(self._grad(np.atleast_2d(points)), dtype=float)


class ConstantFunction(ScalarFunction):
    def __init__(self, c: float):
        self.c = float(c)

    def value(self, points):
        return np.full(len(np.atleast_2d(points)), self.c)

    def gradient(self, points):
        return np.zeros_like(np.atleast_2d(np.asarray(points, dtype=float)))


class ZeroFunction(ConstantFunction):
    def __init__(self):
        super().__init__(0.0)


class SinSinSolution(ScalarFunction):
    """``u = prod_a sin(pi x_a)``; vanishes on the boundary of the unit cube."""

    def value(self, points):
        return np.prod(np.sin(np.pi * np.atleast_2d(points)), axis=1)

    def gradient(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=float))
        s, c = np.sin(np.pi * x), np.cos(np.pi * x)
        g = np.empty_like(x)
        for a in range(x.shape[1]):
            g[:, a] = np.pi * c[:, a] * np.prod(np.delete(s, a, axis=1), axis=1)
        return g


class SinSinRHS(ScalarFunction):
    """``-Laplace`` of :class:`SinSinSolution`: ``d pi^2 u``."""

    def value(self, points):
        x = np.atleast_2d(points)
        return x.shape[1] * np.pi**2 * np.prod(np.sin(np.pi * x), axis=1)


def as_function(f) -> ScalarFunction:
    if isinstance(f, ScalarFunction):
        return f
    if callable(f):
        return FunctionFromCallable(f)
    return ConstantFunction(f)
