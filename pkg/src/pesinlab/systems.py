"""Torus maps, their derivatives, and invariant splittings.

Points on the d-torus are numpy arrays with coordinates in [0, 1).  Distances
use nearest-representative differences and the flat Euclidean norm.  Three
systems are built in:

* ``CatMap``      -- the linear automorphism (y, z) |-> (2y + z, y + z) on T^2.
* ``CircleG``     -- a circle diffeomorphism with an attracting fixed point at
                     0 (slope 1/2) and a repelling one at 1/2 (slope (3+sqrt5)/2).
* ``Product24``   -- CircleG x CatMap on T^3.

``CompositeMap`` wraps user-supplied coordinate formulas with analytic
Jacobians, as read from CLI config files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateSplittingError,
    DimensionMismatchError,
    NotInvertibleError,
    UnsupportedSystemError,
)

__all__ = [
    "Splitting",
    "OrbitSegment",
    "TorusMap",
    "CatMap",
    "CircleG",
    "Product24",
    "CompositeMap",
    "make_system",
    "as_point",
    "wrap",
    "torus_diff",
    "torus_distance",
    "step",
    "inverse_step",
    "iterate",
    "iterate_back",
    "orbit_points",
    "derivative",
    "reference_splitting",
]

_SQRT5 = math.sqrt(5.0)

CAT_MATRIX = np.array([[2.0, 1.0], [1.0, 1.0]])
CAT_INVERSE = np.array([[1.0, -1.0], [-1.0, 2.0]])
# Eigenvalues of the symmetric matrix above.
CAT_EXPANDING = (3.0 + _SQRT5) / 2.0
CAT_CONTRACTING = (3.0 - _SQRT5) / 2.0

# Circle factor: g(x) = x + (B1/2pi) sin(2pi x) + (B2/4pi) sin(4pi x).
# The coefficients pin g'(0) = 1/2 and g'(1/2) = (3+sqrt5)/2 with unit mean
# slope; g' stays positive (minimum ~0.1902), so g is a diffeomorphism.
G_B1 = -(2.0 + _SQRT5) / 4.0
G_B2 = _SQRT5 / 4.0


def _sinpi(t):
    """sin(pi t), exact 0 at integer t (unlike sin(pi * t) in floats)."""
    r = np.mod(np.asarray(t, dtype=float), 2.0)
    sign = np.where(r > 1.0, -1.0, 1.0)
    r = np.where(r > 1.0, r - 1.0, r)
    r = np.where(r > 0.5, 1.0 - r, r)  # exact reflection
    return sign * np.sin(np.pi * r)


def _cospi(t):
    """cos(pi t), exact +-1 at integer t."""
    r = np.mod(np.asarray(t, dtype=float), 2.0)
    r = np.where(r > 1.0, 2.0 - r, r)  # cos is even around t = 1
    sign = np.where(r > 0.5, -1.0, 1.0)
    r = np.where(r > 0.5, 1.0 - r, r)
    return sign * np.cos(np.pi * r)


def g_map(x):
    x = np.mod(np.asarray(x, dtype=float), 1.0)
    y = x + (G_B1 / (2.0 * np.pi)) * _sinpi(2.0 * x) \
          + (G_B2 / (4.0 * np.pi)) * _sinpi(4.0 * x)
    return wrap(y)


def g_prime(x):
    x = np.asarray(x, dtype=float)
    return 1.0 + G_B1 * _cospi(2.0 * x) + G_B2 * _cospi(4.0 * x)


def g_inverse(y):
    """Inverse of the circle factor by bisection plus Newton polish."""
    y = np.mod(np.asarray(y, dtype=float), 1.0)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    lo = np.zeros_like(y)
    hi = np.ones_like(y)
    for _ in range(45):
        mid = 0.5 * (lo + hi)
        below = g_map_lift(mid) <= y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    w = 0.5 * (lo + hi)
    for _ in range(3):
        w = w - (g_map_lift(w) - y) / g_prime(w)
        w = np.clip(w, 0.0, 1.0)
    # Snap the exact fixed points so repeated inversion stays on them.
    w = np.where(y == 0.0, 0.0, w)
    w = np.where(y == 0.5, 0.5, w)
    w = wrap(w)
    return float(w[0]) if scalar else w


def g_map_lift(x):
    """Lift of g to [0, 1] without the final wrap (monotone on [0, 1])."""
    x = np.asarray(x, dtype=float)
    return x + (G_B1 / (2.0 * np.pi)) * _sinpi(2.0 * x) \
             + (G_B2 / (4.0 * np.pi)) * _sinpi(4.0 * x)


def wrap(x):
    """Reduce coordinates to [0, 1); mod can round up to 1.0 for tiny negatives."""
    r = np.mod(np.asarray(x, dtype=float), 1.0)
    return np.where(r == 1.0, 0.0, r)


def as_point(coords, dim=None):
    p = np.atleast_1d(np.asarray(coords, dtype=float))
    if p.ndim != 1:
        raise DimensionMismatchError(f"point must be 1-d, got shape {p.shape}")
    if dim is not None and p.shape[0] != dim:
        raise DimensionMismatchError(f"expected dimension {dim}, got {p.shape[0]}")
    return wrap(p)


def torus_diff(a, b):
    """Nearest-representative difference a - b, componentwise in [-1/2, 1/2)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return np.mod(a - b + 0.5, 1.0) - 0.5


def torus_distance(a, b):
    """Flat metric on the torus (Euclidean norm of the nearest difference)."""
    return np.linalg.norm(torus_diff(a, b), axis=-1)


class TorusMap:
    """Common interface for the dynamical systems in this package."""

    dim: int
    name: str
    invertible: bool = True

    def step(self, p):
        return self.step_many(np.asarray(p, dtype=float)[None, :])[0]

    def inverse_step(self, p):
        return self.inverse_many(np.asarray(p, dtype=float)[None, :])[0]

    def jacobian(self, p):
        return self.jacobian_many(np.asarray(p, dtype=float)[None, :])[0]

    def step_many(self, pts):
        raise NotImplementedError

    def inverse_many(self, pts):
        raise NotImplementedError

    def jacobian_many(self, pts):
        raise NotImplementedError

    def _check(self, pts):
        pts = np.asarray(pts, dtype=float)
        if pts.shape[-1] != self.dim:
            raise DimensionMismatchError(
                f"{self.name} expects dimension {self.dim}, got {pts.shape[-1]}")
        return pts

    def describe(self):
        return {"name": self.name, "dim": self.dim}


class CatMap(TorusMap):
    """Hyperbolic automorphism (y, z) |-> (2y + z, y + z) mod 1."""

    dim = 2
    name = "cat"

    def step_many(self, pts):
        return wrap(self._check(pts) @ CAT_MATRIX.T)

    def inverse_many(self, pts):
        return wrap(self._check(pts) @ CAT_INVERSE.T)

    def jacobian_many(self, pts):
        pts = self._check(pts)
        return np.broadcast_to(CAT_MATRIX, pts.shape[:-1] + (2, 2)).copy()


class CircleG(TorusMap):
    """The circle factor g alone, as a 1-dimensional system."""

    dim = 1
    name = "circle-g"

    def step_many(self, pts):
        return g_map(self._check(pts))

    def inverse_many(self, pts):
        return g_inverse(self._check(pts))

    def jacobian_many(self, pts):
        pts = self._check(pts)
        return g_prime(pts)[..., None]


class Product24(TorusMap):
    """Product of the circle factor with the cat map on T^3 = S^1 x T^2."""

    dim = 3
    name = "product24"

    def step_many(self, pts):
        pts = self._check(pts)
        out = np.empty_like(pts)
        out[..., 0] = g_map(pts[..., 0])
        out[..., 1:] = wrap(pts[..., 1:] @ CAT_MATRIX.T)
        return out

    def inverse_many(self, pts):
        pts = self._check(pts)
        out = np.empty_like(pts)
        out[..., 0] = g_inverse(pts[..., 0])
        out[..., 1:] = wrap(pts[..., 1:] @ CAT_INVERSE.T)
        return out

    def jacobian_many(self, pts):
        pts = self._check(pts)
        n = pts.shape[:-1]
        jac = np.zeros(n + (3, 3))
        jac[..., 0, 0] = g_prime(pts[..., 0])
        jac[..., 1:, 1:] = CAT_MATRIX
        return jac


class CompositeMap(TorusMap):
    """User-defined map given by per-coordinate callables.

    ``forward`` and ``inverse`` take and return (..., d) arrays of wrapped
    coordinates; ``jacobian_fn`` returns a (..., d, d) stack of analytic
    derivatives.  ``splitting`` may pin a reference splitting for the
    certificate machinery.
    """

    name = "composite"

    def __init__(self, dim, forward, jacobian_fn, inverse=None, splitting=None,
                 name=None):
        self.dim = int(dim)
        self._forward = forward
        self._jacobian = jacobian_fn
        self._inverse = inverse
        self.invertible = inverse is not None
        self.splitting = splitting
        if name:
            self.name = str(name)

    def step_many(self, pts):
        return wrap(self._forward(self._check(pts)))

    def inverse_many(self, pts):
        if self._inverse is None:
            raise NotInvertibleError(f"{self.name} has no inverse map")
        return wrap(self._inverse(self._check(pts)))

    def jacobian_many(self, pts):
        pts = self._check(pts)
        jac = np.asarray(self._jacobian(pts), dtype=float)
        want = pts.shape[:-1] + (self.dim, self.dim)
        return np.broadcast_to(jac, want).copy() if jac.shape != want else jac

    _EVAL_NAMES = {
        "np": np, "pi": np.pi, "sin": np.sin, "cos": np.cos, "tan": np.tan,
        "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs,
        "mod": np.mod, "floor": np.floor, "where": np.where,
    }

    @classmethod
    def from_expressions(cls, dim, map_exprs, jac_exprs, inverse_exprs=None,
                         e_basis=None, f_basis=None, name=None):
        """Build a system from coordinate formula strings in x0..x{d-1}."""
        dim = int(dim)
        if len(map_exprs) != dim:
            raise DimensionMismatchError("need one map formula per coordinate")
        if len(jac_exprs) != dim or any(len(row) != dim for row in jac_exprs):
            raise DimensionMismatchError("jacobian formulas must form a d x d grid")

        def compile_all(exprs):
            return [compile(e, "<system-config>", "eval") for e in exprs]

        map_code = compile_all(map_exprs)
        jac_code = [compile_all(row) for row in jac_exprs]
        inv_code = compile_all(inverse_exprs) if inverse_exprs else None

        def env(pts):
            ns = dict(cls._EVAL_NAMES)
            for i in range(dim):
                ns[f"x{i}"] = pts[..., i]
            ns["__builtins__"] = {}
            return ns

        def run(code_list, pts):
            ns = env(pts)
            cols = [np.broadcast_to(np.asarray(eval(c, ns), dtype=float),
                                    pts.shape[:-1]) for c in code_list]
            return np.stack(cols, axis=-1)

        forward = lambda pts: run(map_code, pts)
        inverse = (lambda pts: run(inv_code, pts)) if inv_code else None

        def jacobian_fn(pts):
            ns = env(pts)
            rows = []
            for row in jac_code:
                rows.append([np.broadcast_to(np.asarray(eval(c, ns), dtype=float),
                                             pts.shape[:-1]) for c in row])
            return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

        splitting = None
        if e_basis is not None and f_basis is not None:
            splitting = Splitting(np.asarray(e_basis, float), np.asarray(f_basis, float))
        return cls(dim, forward, jacobian_fn, inverse=inverse,
                   splitting=splitting, name=name)


_BUILTINS = {"cat": CatMap, "circle-g": CircleG, "product24": Product24}


def make_system(spec):
    """Create a system from a name ('cat', 'circle-g', 'product24') or config dict."""
    if isinstance(spec, TorusMap):
        return spec
    if isinstance(spec, str):
        try:
            return _BUILTINS[spec]()
        except KeyError:
            raise UnsupportedSystemError(
                f"unknown system {spec!r}; choose from {sorted(_BUILTINS)}") from None
    if isinstance(spec, dict):
        kind = spec.get("kind", "composite")
        if kind in _BUILTINS:
            return _BUILTINS[kind]()
        if kind != "composite":
            raise UnsupportedSystemError(f"unknown system kind {kind!r}")
        try:
            return CompositeMap.from_expressions(
                spec["dim"], spec["map"], spec["jacobian"],
                inverse_exprs=spec.get("inverse"),
                e_basis=spec.get("e_basis"), f_basis=spec.get("f_basis"),
                name=spec.get("name"))
        except KeyError as missing:
            raise UnsupportedSystemError(f"composite config missing key {missing}") from None
    raise UnsupportedSystemError(f"cannot build a system from {type(spec).__name__}")


@dataclass(frozen=True)
class Splitting:
    """A direct-sum splitting E + F of the tangent space, unit basis columns.

    ``e_basis`` is (d, dim E), ``f_basis`` is (d, dim F) with
    dim E + dim F = d and E, F transverse.
    """

    e_basis: np.ndarray
    f_basis: np.ndarray

    def __post_init__(self):
        e = np.atleast_2d(np.asarray(self.e_basis, dtype=float))
        f = np.atleast_2d(np.asarray(self.f_basis, dtype=float))
        if e.shape[0] != f.shape[0]:
            raise DimensionMismatchError("E and F live in different ambient dimensions")
        d = e.shape[0]
        if e.shape[1] + f.shape[1] != d:
            raise DimensionMismatchError(
                f"dim E + dim F = {e.shape[1]} + {f.shape[1]} != ambient {d}")
        norms_e = np.linalg.norm(e, axis=0)
        norms_f = np.linalg.norm(f, axis=0)
        if np.any(norms_e == 0.0) or np.any(norms_f == 0.0):
            raise DegenerateSplittingError("zero basis vector in splitting")
        e = e / norms_e
        f = f / norms_f
        if np.linalg.matrix_rank(np.hstack([e, f])) != d:
            raise DegenerateSplittingError("E and F are not transverse")
        object.__setattr__(self, "e_basis", e)
        object.__setattr__(self, "f_basis", f)

    @property
    def dim(self):
        return self.e_basis.shape[0]

    @property
    def dim_e(self):
        return self.e_basis.shape[1]

    @property
    def dim_f(self):
        return self.f_basis.shape[1]


def reference_splitting(system, p=None):
    """The natural invariant splitting of a builtin hyperbolic system.

    Constant in coordinates for both supported systems, so ``p`` is accepted
    only for interface uniformity.
    """
    if isinstance(system, CatMap):
        e = np.array([[(1.0 - _SQRT5) / 2.0], [1.0]])
        f = np.array([[1.0], [(_SQRT5 - 1.0) / 2.0]])
        return Splitting(e, f)
    if isinstance(system, Product24):
        e2 = np.array([(1.0 - _SQRT5) / 2.0, 1.0])
        e2 = e2 / np.linalg.norm(e2)
        f2 = np.array([1.0, (_SQRT5 - 1.0) / 2.0])
        f2 = f2 / np.linalg.norm(f2)
        e = np.zeros((3, 2))
        e[0, 0] = 1.0
        e[1:, 1] = e2
        f = np.zeros((3, 1))
        f[1:, 0] = f2
        return Splitting(e, f)
    if isinstance(system, CompositeMap) and system.splitting is not None:
        return system.splitting
    raise UnsupportedSystemError(
        f"no reference splitting defined for system {system.name!r}")


@dataclass(frozen=True)
class OrbitSegment:
    """A finite true-orbit piece: base point, length n, cached points f^0..f^n."""

    base: np.ndarray
    length: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if self.length < 1:
            raise ValueError(f"segment length must be >= 1, got {self.length}")
        if pts.shape != (self.length + 1, np.atleast_1d(self.base).shape[0]):
            raise DimensionMismatchError(
                f"cached points shape {pts.shape} does not match length {self.length}")
        object.__setattr__(self, "base", as_point(self.base))
        object.__setattr__(self, "points", pts)

    @property
    def end(self):
        return self.points[-1]

    @classmethod
    def from_points(cls, points):
        pts = np.asarray(points, dtype=float)
        return cls(pts[0], pts.shape[0] - 1, pts)


def orbit_points(system, p, n):
    """Forward orbit as an (n+1, d) array; points wrapped into [0, 1)."""
    p = as_point(p, system.dim)
    pts = np.empty((n + 1, system.dim))
    pts[0] = p
    for t in range(n):
        pts[t + 1] = system.step(pts[t])
    return pts


def orbit_points_back(system, p, n):
    """Backward orbit: row t holds f^{-t}(p), t = 0..n."""
    p = as_point(p, system.dim)
    pts = np.empty((n + 1, system.dim))
    pts[0] = p
    for t in range(n):
        pts[t + 1] = system.inverse_step(pts[t])
    return pts


def orbit_many(system, starts, n):
    """Forward orbits of a batch of starts: (n+1, B, d)."""
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    out = np.empty((n + 1,) + starts.shape)
    out[0] = wrap(starts)
    for t in range(n):
        out[t + 1] = system.step_many(out[t])
    return out


def step(system, p):
    return system.step(as_point(p, system.dim))


def inverse_step(system, p):
    return system.inverse_step(as_point(p, system.dim))


def derivative(system, p):
    return system.jacobian(as_point(p, system.dim))


def iterate(system, p, n):
    """OrbitSegment for the forward orbit of p (n >= 1 steps)."""
    return OrbitSegment(as_point(p, system.dim), n, orbit_points(system, p, n))


def iterate_back(system, p, n):
    return orbit_points_back(system, p, n)
