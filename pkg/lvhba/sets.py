"""
Projection-friendly convex sets.

Every set is an immutable value object exposing three operations:

- project(w)                 exact Euclidean projection (Dykstra for intersections)
- contains(w, tol)           (inside?, worst violation)
- tangent_residual(w, d)     dist(0, d + N_S(w)) = ||Proj_{T_S(w)}(-d)||

Module-level functions of the same names dispatch to the methods so call sites
can stay agnostic of the concrete set type.

Catalogue: WholeSpace, Box, Hyperplane, Halfspace, AffineSubspace, Ball,
Intersection, Product.
"""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import PreconditionError, ProjectionError, UnsupportedSetError

logger = logging.getLogger(__name__)

# Boundary classification threshold for box/halfspace/ball activity.
ACT_TOL = 1e-8
DYKSTRA_ITERS = 5000
DYKSTRA_TOL = 1e-10


def _as_vector(w, dim: int) -> np.ndarray:
    arr = np.asarray(w, dtype=float).reshape(-1)
    if arr.shape[0] != dim:
        raise PreconditionError(f"dimension mismatch: expected {dim}, got {arr.shape[0]}")
    return arr


class ConvexSet(ABC):
    """Closed convex subset of real^dim."""

    dim: int

    @abstractmethod
    def project(self, w) -> np.ndarray:
        ...

    @abstractmethod
    def violation(self, w: np.ndarray) -> float:
        """Worst violation of the defining (in)equalities at w (0 inside)."""

    def contains(self, w, tol: float = 0.0) -> Tuple[bool, float]:
        v = self.violation(_as_vector(w, self.dim))
        return v <= tol, v

    def tangent_residual(self, w, d, act_tol: float = ACT_TOL) -> float:
        w = _as_vector(w, self.dim)
        d = _as_vector(d, self.dim)
        self._require_member(w, act_tol)
        return self._tangent_residual(w, d, act_tol)

    @abstractmethod
    def _tangent_residual(self, w: np.ndarray, d: np.ndarray, act_tol: float) -> float:
        ...

    def sample(self, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        """A random member of the set (Gaussian draw pushed through the projection)."""
        return self.project(rng.normal(0.0, scale, self.dim))

    def _require_member(self, w: np.ndarray, act_tol: float) -> None:
        tol = act_tol * (1.0 + float(np.max(np.abs(w), initial=0.0)))
        v = self.violation(w)
        if v > tol:
            raise PreconditionError(f"{type(self).__name__}: point violates the set by {v:.3e}")


@dataclass(frozen=True, eq=False)
class WholeSpace(ConvexSet):
    dim: int

    def project(self, w) -> np.ndarray:
        return _as_vector(w, self.dim).copy()

    def violation(self, w: np.ndarray) -> float:
        return 0.0

    def _tangent_residual(self, w, d, act_tol) -> float:
        return float(np.linalg.norm(d))


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    """{w : lo <= w <= hi}; bounds may be +-inf."""

    lo: np.ndarray
    hi: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise PreconditionError("Box bounds must have the same shape")
        if np.any(lo > hi):
            raise PreconditionError("Box requires lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "dim", int(lo.shape[0]))

    @classmethod
    def uniform(cls, dim: int, lo: float, hi: float) -> "Box":
        return cls(np.full(dim, lo, dtype=float), np.full(dim, hi, dtype=float))

    def project(self, w) -> np.ndarray:
        return np.clip(_as_vector(w, self.dim), self.lo, self.hi)

    def violation(self, w: np.ndarray) -> float:
        if self.dim == 0:
            return 0.0
        return float(max(np.max(self.lo - w), np.max(w - self.hi), 0.0))

    def _tangent_residual(self, w, d, act_tol) -> float:
        v = -d
        at_lo = (w - self.lo) <= act_tol
        at_hi = (self.hi - w) <= act_tol
        # tangent cone is [0,inf) at lo, (-inf,0] at hi, {0} when both bind
        v = np.where(at_lo, np.maximum(v, 0.0), v)
        v = np.where(at_hi, np.minimum(v, 0.0), v)
        return float(np.linalg.norm(v))

    def sample(self, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        finite = np.isfinite(self.lo) & np.isfinite(self.hi)
        draw = rng.normal(0.0, scale, self.dim)
        draw[finite] = rng.uniform(self.lo[finite], self.hi[finite])
        return self.project(draw)


@dataclass(frozen=True, eq=False)
class Hyperplane(ConvexSet):
    """{w : a^T w = b}."""

    a: np.ndarray
    b: float
    dim: int = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        if not np.any(a):
            raise PreconditionError("Hyperplane normal must be nonzero")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "dim", int(a.shape[0]))

    def project(self, w) -> np.ndarray:
        w = _as_vector(w, self.dim)
        return w - (self.a @ w - self.b) / (self.a @ self.a) * self.a

    def violation(self, w: np.ndarray) -> float:
        return float(abs(self.a @ w - self.b))

    def _tangent_residual(self, w, d, act_tol) -> float:
        return float(np.linalg.norm(d - (self.a @ d) / (self.a @ self.a) * self.a))


@dataclass(frozen=True, eq=False)
class Halfspace(ConvexSet):
    """{w : a^T w <= b}."""

    a: np.ndarray
    b: float
    dim: int = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        if not np.any(a):
            raise PreconditionError("Halfspace normal must be nonzero")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "dim", int(a.shape[0]))

    def project(self, w) -> np.ndarray:
        w = _as_vector(w, self.dim)
        excess = self.a @ w - self.b
        if excess <= 0.0:
            return w.copy()
        return w - excess / (self.a @ self.a) * self.a

    def violation(self, w: np.ndarray) -> float:
        return float(max(self.a @ w - self.b, 0.0))

    def _tangent_residual(self, w, d, act_tol) -> float:
        v = -d
        if self.b - self.a @ w <= act_tol:
            s = self.a @ v
            if s > 0.0:
                v = v - s / (self.a @ self.a) * self.a
        return float(np.linalg.norm(v))


@dataclass(frozen=True, eq=False)
class AffineSubspace(ConvexSet):
    """{w : M w = c} with M of full row rank; the Cholesky factor of M M^T is cached."""

    M: np.ndarray
    c: np.ndarray
    dim: int = field(init=False)
    _chol: Tuple[np.ndarray, bool] = field(init=False, repr=False)

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if c.shape[0] != M.shape[0]:
            raise PreconditionError("AffineSubspace: len(c) must equal the number of rows of M")
        try:
            chol = cho_factor(M @ M.T)
        except LinAlgError as e:
            raise ProjectionError("AffineSubspace: M M^T is singular (M lacks full row rank)") from e
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "dim", int(M.shape[1]))
        object.__setattr__(self, "_chol", chol)

    def solve_gram(self, rhs: np.ndarray) -> np.ndarray:
        """(M M^T)^{-1} rhs via the cached factorization."""
        return cho_solve(self._chol, rhs)

    def project(self, w) -> np.ndarray:
        w = _as_vector(w, self.dim)
        return w - self.M.T @ self.solve_gram(self.M @ w - self.c)

    def violation(self, w: np.ndarray) -> float:
        return float(np.max(np.abs(self.M @ w - self.c)))

    def _tangent_residual(self, w, d, act_tol) -> float:
        return float(np.linalg.norm(d - self.M.T @ self.solve_gram(self.M @ d)))


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float
    dim: int = field(init=False)

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(-1)
        if self.radius < 0:
            raise PreconditionError("Ball radius must be nonnegative")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "dim", int(center.shape[0]))

    def project(self, w) -> np.ndarray:
        w = _as_vector(w, self.dim)
        off = w - self.center
        dist = np.linalg.norm(off)
        if dist <= self.radius:
            return w.copy()
        return self.center + off * (self.radius / dist)

    def violation(self, w: np.ndarray) -> float:
        return float(max(np.linalg.norm(w - self.center) - self.radius, 0.0))

    def _tangent_residual(self, w, d, act_tol) -> float:
        if self.radius == 0.0:
            # single point: the tangent cone is {0}
            return 0.0
        v = -d
        off = w - self.center
        if self.radius - np.linalg.norm(off) <= act_tol and np.any(off):
            s = off @ v
            if s > 0.0:
                v = v - s / (off @ off) * off
        return float(np.linalg.norm(v))


@dataclass(frozen=True, eq=False)
class Intersection(ConvexSet):
    """Intersection of convex sets, projected with Dykstra's algorithm.

    tangent_model, when given, is an equivalent analytic set (e.g. an
    AffineSubspace describing the same polyhedron) used for tangent residuals.
    """

    members: Sequence[ConvexSet]
    dykstra_iters: int = DYKSTRA_ITERS
    dykstra_tol: float = DYKSTRA_TOL
    tangent_model: Optional[ConvexSet] = None
    dim: int = field(init=False)

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise PreconditionError("Intersection needs at least one member")
        dims = {s.dim for s in members}
        if len(dims) != 1:
            raise PreconditionError(f"Intersection members disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "dim", dims.pop())

    def project(self, w) -> np.ndarray:
        x = _as_vector(w, self.dim).copy()
        increments = [np.zeros(self.dim) for _ in self.members]
        tol_sq = self.dykstra_tol ** 2
        change = np.inf
        for it in range(1, self.dykstra_iters + 1):
            x_start = x
            change = 0.0
            for i, member in enumerate(self.members):
                shifted = x + increments[i]
                y = member.project(shifted)
                new_inc = shifted - y
                change += float(np.sum((new_inc - increments[i]) ** 2))
                increments[i] = new_inc
                x = y
            change += float(np.sum((x - x_start) ** 2))
            if change <= tol_sq:
                logger.debug("Dykstra converged in %d sweeps", it)
                return x
        raise ProjectionError(
            f"Dykstra did not converge in {self.dykstra_iters} sweeps "
            f"(last change {np.sqrt(change):.3e}); intersection may be empty or ill-posed"
        )

    def violation(self, w: np.ndarray) -> float:
        return max(m.violation(w) for m in self.members)

    def _tangent_residual(self, w, d, act_tol) -> float:
        if self.tangent_model is None:
            raise UnsupportedSetError(
                "tangent residual on an Intersection needs an equivalent analytic tangent_model"
            )
        return self.tangent_model.tangent_residual(w, d, act_tol)


@dataclass(frozen=True, eq=False)
class Product(ConvexSet):
    """Cartesian product; vectors are concatenations of member blocks."""

    members: Sequence[ConvexSet]
    dim: int = field(init=False)
    _offsets: Tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        members = tuple(self.members)
        offsets = [0]
        for m in members:
            offsets.append(offsets[-1] + m.dim)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "dim", offsets[-1])
        object.__setattr__(self, "_offsets", tuple(offsets))

    def blocks(self, w: np.ndarray) -> List[np.ndarray]:
        o = self._offsets
        return [w[o[i]:o[i + 1]] for i in range(len(self.members))]

    def project(self, w) -> np.ndarray:
        w = _as_vector(w, self.dim)
        parts = [m.project(b) for m, b in zip(self.members, self.blocks(w))]
        return np.concatenate(parts) if parts else w.copy()

    def violation(self, w: np.ndarray) -> float:
        return max((m.violation(b) for m, b in zip(self.members, self.blocks(w))), default=0.0)

    def tangent_residual(self, w, d, act_tol: float = ACT_TOL) -> float:
        w = _as_vector(w, self.dim)
        d = _as_vector(d, self.dim)
        parts = [
            m.tangent_residual(wb, db, act_tol)
            for m, wb, db in zip(self.members, self.blocks(w), self.blocks(d))
        ]
        return float(np.sqrt(sum(p * p for p in parts)))

    def _tangent_residual(self, w, d, act_tol) -> float:  # pragma: no cover - routed above
        return self.tangent_residual(w, d, act_tol)

    def sample(self, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        parts = [m.sample(rng, scale) for m in self.members]
        return np.concatenate(parts) if parts else np.zeros(0)


def project(convex_set: ConvexSet, w) -> np.ndarray:
    return convex_set.project(w)


def tangent_residual(convex_set: ConvexSet, w, d, act_tol: float = ACT_TOL) -> float:
    return convex_set.tangent_residual(w, d, act_tol)


def contains(convex_set: ConvexSet, w, tol: float = 0.0) -> Tuple[bool, float]:
    return convex_set.contains(w, tol)


def nonneg_box(dim: int, r: float) -> Box:
    """Z = [0, r]^dim, the truncated multiplier set."""
    return Box.uniform(dim, 0.0, r)
