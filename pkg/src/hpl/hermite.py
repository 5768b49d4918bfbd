"""Probabilists' Hermite polynomials and subordinating transforms G."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import hermite_e

from .errors import DegenerateError, DomainError, NotCenteredError

BUILTIN_CASES = ("H1", "H2", "H3", "H4")
DEFAULT_K_MAX = 16
RANK_TOLERANCE = 1e-8


def hermite_eval(k: int, x):
    """H_k(x) by the three-term recurrence H_{k+1} = x H_k - k H_{k-1}."""
    if k < 0:
        raise DomainError("Hermite degree must be nonnegative")
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), x.copy()
    if k == 0:
        out = prev
    else:
        for n in range(1, k):
            prev, cur = cur, x * cur - n * prev
        out = cur
    return out if out.ndim else float(out)


def _builtin(kind: str, u: np.ndarray) -> np.ndarray:
    if kind == "H1":
        return u.copy()
    u2 = u * u
    if kind == "H2":
        return u2 - 1.0
    if kind == "H3":
        return (u2 - 3.0) * u
    return (u2 - 6.0) * u2 + 3.0


@dataclass(frozen=True)
class TransformSpec:
    """Subordinating function G(u) = sum_{k>=1} C_k / k! H_k(u).

    ``coefficients[k-1]`` holds C_k; there is no k = 0 term, which encodes
    E G(xi) = 0.  Built-in cases Hm use the closed-form polynomial.
    """

    kind: str
    coefficients: tuple[float, ...]
    rank: int

    def __post_init__(self):
        if self.kind not in BUILTIN_CASES + ("General",):
            raise DomainError(f"unknown transform kind {self.kind!r}")
        coeffs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if not 1 <= self.rank <= len(coeffs):
            raise DomainError("rank outside the coefficient list")
        if any(c != 0.0 for c in coeffs[: self.rank - 1]) or coeffs[self.rank - 1] == 0.0:
            raise DomainError("rank inconsistent with coefficients")

    @classmethod
    def builtin(cls, kind: str) -> "TransformSpec":
        if kind not in BUILTIN_CASES:
            raise DomainError(f"built-in cases are {BUILTIN_CASES}, got {kind!r}")
        m = int(kind[1])
        coeffs = [0.0] * m
        coeffs[m - 1] = float(math.factorial(m))
        return cls(kind, tuple(coeffs), m)

    @classmethod
    def general(cls, coefficients: Sequence[float], tol: float = RANK_TOLERANCE) -> "TransformSpec":
        coeffs = [float(c) if abs(c) > tol else 0.0 for c in coefficients]
        nz = [k for k, c in enumerate(coeffs, start=1) if c != 0.0]
        if not nz:
            raise DegenerateError("all Hermite coefficients vanish")
        return cls("General", tuple(coeffs[: nz[-1]]), nz[0])

    @classmethod
    def from_record(cls, record) -> "TransformSpec":
        if isinstance(record, str):
            return cls.builtin(record)
        if isinstance(record, dict) and "coefficients" in record:
            return cls.general(record["coefficients"])
        if isinstance(record, (list, tuple)):
            return cls.general(record)
        raise DomainError(f"cannot build a transform from {record!r}")

    def to_record(self):
        if self.kind in BUILTIN_CASES:
            return self.kind
        return {"coefficients": list(self.coefficients)}

    @property
    def variance(self) -> float:
        """E G(xi)^2 = sum C_k^2 / k!."""
        return sum(c * c / math.factorial(k) for k, c in enumerate(self.coefficients, start=1))

    def weight(self, j: int) -> float:
        """C_j^2 / j!, zero beyond the stored list."""
        if j < 1 or j > len(self.coefficients):
            return 0.0
        c = self.coefficients[j - 1]
        return c * c / math.factorial(j)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind in BUILTIN_CASES:
            return _builtin(self.kind, u)
        # sum_k (C_k/k!) He_k via numpy's HermiteE series
        series = np.concatenate([[0.0], [c / math.factorial(k)
                                         for k, c in enumerate(self.coefficients, start=1)]])
        return hermite_e.hermeval(u, series)


def transform_path(spec: TransformSpec, xi):
    """Pointwise eps(t) = G(xi(t)); keeps SamplePath metadata when given one."""
    from .pathgen import SamplePath

    if isinstance(xi, SamplePath):
        return xi.with_values(spec(xi.values))
    values = np.asarray(xi, dtype=float)
    if values.size == 0:
        raise DomainError("empty path")
    return spec(values)


def hermite_coefficients(g: Callable, k_max: int = DEFAULT_K_MAX, quad_order: int | None = None,
                         rank_tolerance: float = RANK_TOLERANCE) -> TransformSpec:
    """Hermite coefficients C_k = E[g(Z) H_k(Z)] by Gauss-Hermite quadrature."""
    if k_max < 1:
        raise DomainError("k_max must be positive")
    if quad_order is None:
        quad_order = max(2 * k_max + 40, 80)
    if quad_order < k_max + 1:
        raise DomainError("quad_order must be at least k_max + 1")
    nodes, weights = hermite_e.hermegauss(quad_order)
    weights = weights / math.sqrt(2.0 * math.pi)
    gv = np.asarray(g(nodes), dtype=float)
    coeffs = [float(np.sum(weights * gv * hermite_eval(k, nodes))) for k in range(k_max + 1)]
    if abs(coeffs[0]) >= rank_tolerance:
        raise NotCenteredError(f"E g(Z) = {coeffs[0]:.3g} is not zero")
    if all(abs(c) <= rank_tolerance for c in coeffs[1:]):
        raise DegenerateError("all Hermite coefficients are below tolerance")
    return TransformSpec.general(coeffs[1:], tol=rank_tolerance)
