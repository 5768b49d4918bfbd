"""Stationary Gaussian paths with a NoiseModel covariance, and observations.

Normals come from a counter-based Philox stream keyed by the seed and
mapped through the inverse normal CDF, so path ``i`` of an experiment is
a pure function of ``(seed, i)`` and does not depend on scheduling.
"""
from __future__ import annotations

import enum
import functools
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import fft as sp_fft
from scipy import linalg
from scipy.special import ndtri

from .errors import ApproximationError, DomainError, FactorizationError
from .spectral_cov import NoiseModel, covariance_at

log = logging.getLogger(__name__)

CHOLESKY_MAX = 8192
CLIP_TOLERANCE = 1e-8
MAX_PADDING = 32
# short paths embed into at least this many points, scaled by the padding factor
MIN_EMBEDDING = 512
SUGGESTED_NUGGET = 1e-10


class Method(enum.IntEnum):
    CHOLESKY = 0
    CIRCULANT = 1
    EXTERNAL = 2


@dataclass(frozen=True, eq=False)
class SamplePath:
    values: np.ndarray
    seed: int = 0
    method: Method = Method.EXTERNAL
    model_fingerprint: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise DomainError("a sample path needs at least one value")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "method", Method(self.method))

    @property
    def T(self) -> int:
        return self.values.size

    def with_values(self, values) -> "SamplePath":
        return replace(self, values=np.asarray(values, dtype=float))


def derive_seed(*parts: int) -> int:
    """Mix integer parts into one 64-bit seed."""
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in parts])
    return int(ss.generate_state(1, np.uint64)[0])


def standard_normals(seed: int, n: int) -> np.ndarray:
    """n standard normals, deterministic in ``seed``."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    bitgen = np.random.Philox(key=ss.generate_state(2, np.uint64))
    raw = bitgen.random_raw(n)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return ndtri(u)


# ---------------------------------------------------------------------------
# Dense Cholesky
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=2)
def _cholesky_factor(model: NoiseModel, T: int, nugget: float) -> tuple[np.ndarray, float]:
    cov = linalg.toeplitz(covariance_at(model, np.arange(T, dtype=float)))
    try:
        return linalg.cholesky(cov, lower=True, overwrite_a=True, check_finite=False), 0.0
    except linalg.LinAlgError:
        if nugget <= 0.0:
            raise FactorizationError(
                f"Toeplitz covariance of size {T} is not numerically positive definite; "
                f"retry with nugget={SUGGESTED_NUGGET:g} or use the circulant method"
            ) from None
    cov = linalg.toeplitz(covariance_at(model, np.arange(T, dtype=float)))
    cov[np.diag_indices(T)] += nugget
    try:
        return linalg.cholesky(cov, lower=True, overwrite_a=True, check_finite=False), nugget
    except linalg.LinAlgError:
        raise FactorizationError(
            f"factorization failed even with nugget={nugget:g}; use the circulant method"
        ) from None


def cholesky_factor(model: NoiseModel, T: int, nugget: float = 0.0,
                    cholesky_max: int = CHOLESKY_MAX) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of the T x T Toeplitz covariance and the nugget used.

    The nugget is only applied when the plain factorization fails.
    """
    if T < 1:
        raise DomainError("T must be positive")
    if T > cholesky_max:
        raise DomainError(f"T={T} exceeds cholesky_max={cholesky_max}; use the circulant method")
    return _cholesky_factor(model, int(T), float(nugget))


def cholesky_paths(model: NoiseModel, T: int, seeds: Sequence[int], nugget: float = 0.0,
                   cholesky_max: int = CHOLESKY_MAX) -> np.ndarray:
    """One path per seed, stacked as rows of an (n, T) array."""
    L, _ = cholesky_factor(model, T, nugget, cholesky_max)
    eta = np.stack([standard_normals(s, T) for s in seeds], axis=1)
    return (L @ eta).T


def gaussian_path_cholesky(model: NoiseModel, T: int, seed: int, nugget: float = 0.0,
                           cholesky_max: int = CHOLESKY_MAX) -> SamplePath:
    L, used = cholesky_factor(model, T, nugget, cholesky_max)
    values = L @ standard_normals(seed, T)
    return SamplePath(values, int(seed), Method.CHOLESKY, model.fingerprint(), {"nugget": used})


# ---------------------------------------------------------------------------
# Circulant embedding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Embedding:
    sqrt_eig: np.ndarray
    size: int
    padding_factor: int
    clipped_mass: float


@functools.lru_cache(maxsize=8)
def _embedding(model: NoiseModel, T: int, padding_factor: int, clip_tolerance: float) -> Embedding:
    pf = padding_factor
    while True:
        M = sp_fft.next_fast_len(pf * max(T - 1, MIN_EMBEDDING), real=True)
        k = np.arange(M)
        row = covariance_at(model, np.minimum(k, M - k).astype(float))
        eig = sp_fft.rfft(row).real
        # full spectrum from the half spectrum of a symmetric row
        eig = np.concatenate([eig, eig[1:(M + 1) // 2][::-1]])
        lo, top = eig.min(), eig.max()
        if lo >= -clip_tolerance * top:
            neg = np.clip(eig, None, 0.0)
            clipped = float(-neg.sum() / eig.clip(0.0).sum())
            return Embedding(np.sqrt(eig.clip(0.0) / M), M, pf, clipped)
        if pf * 2 > MAX_PADDING:
            neg = -np.clip(eig, None, 0.0).sum() / np.abs(eig).sum()
            raise ApproximationError(
                f"circulant embedding has negative eigenvalues (min {lo / top:.3g} relative) "
                f"even at padding {pf}; clipped mass would be {neg:.3g}"
            )
        pf *= 2


def circulant_embedding(model: NoiseModel, T: int, padding_factor: int = 2,
                        clip_tolerance: float = CLIP_TOLERANCE) -> Embedding:
    if padding_factor < 2:
        raise DomainError("padding_factor must be >= 2")
    return _embedding(model, int(T), int(padding_factor), float(clip_tolerance))


def circulant_paths(model: NoiseModel, T: int, seeds: Sequence[int], padding_factor: int = 2,
                    clip_tolerance: float = CLIP_TOLERANCE) -> np.ndarray:
    emb = circulant_embedding(model, T, padding_factor, clip_tolerance)
    M = emb.size
    out = np.empty((len(seeds), T))
    for i, s in enumerate(seeds):
        z = standard_normals(s, 2 * M)
        w = emb.sqrt_eig * (z[:M] + 1j * z[M:])
        out[i] = sp_fft.fft(w)[:T].real
    return out


def gaussian_path_circulant(model: NoiseModel, T: int, seed: int, padding_factor: int = 2,
                            clip_tolerance: float = CLIP_TOLERANCE) -> SamplePath:
    emb = circulant_embedding(model, T, padding_factor, clip_tolerance)
    values = circulant_paths(model, T, [seed], padding_factor, clip_tolerance)[0]
    return SamplePath(values, int(seed), Method.CIRCULANT, model.fingerprint(),
                      {"embedding_size": emb.size, "padding_factor": emb.padding_factor,
                       "clipped_mass": emb.clipped_mass})


# ---------------------------------------------------------------------------
# Routing and observations
# ---------------------------------------------------------------------------

def resolve_method(method: str | Method, T: int, cholesky_max: int = CHOLESKY_MAX) -> Method:
    if isinstance(method, Method):
        return method
    method = method.lower()
    if method == "auto":
        return Method.CHOLESKY if T <= cholesky_max else Method.CIRCULANT
    try:
        return Method[method.upper()]
    except KeyError:
        raise DomainError(f"unknown generation method {method!r}") from None


def gaussian_paths(model: NoiseModel, T: int, seeds: Sequence[int], method="auto",
                   cholesky_max: int = CHOLESKY_MAX, nugget: float = 0.0) -> np.ndarray:
    m = resolve_method(method, T, cholesky_max)
    if m is Method.CHOLESKY:
        return cholesky_paths(model, T, seeds, nugget, cholesky_max)
    if m is Method.CIRCULANT:
        return circulant_paths(model, T, seeds)
    raise DomainError("external paths cannot be generated")


def gaussian_path(model: NoiseModel, T: int, seed: int, method="auto",
                  cholesky_max: int = CHOLESKY_MAX, nugget: float = 0.0) -> SamplePath:
    m = resolve_method(method, T, cholesky_max)
    if m is Method.CHOLESKY:
        return gaussian_path_cholesky(model, T, seed, nugget, cholesky_max)
    return gaussian_path_circulant(model, T, seed)


def synthesize_observations(theta, model: NoiseModel, transform, T: int, seed: int,
                            method="auto", **kwargs) -> SamplePath:
    """x(t) = g(t, theta) + G(xi(t)) for t = 1..T."""
    from .estimator import regression_value

    xi = gaussian_path(model, T, seed, method, **kwargs)
    t = np.arange(1, T + 1, dtype=float)
    x = regression_value(theta, t) + transform(xi.values)
    meta = dict(xi.meta, transform=transform.to_record())
    return replace(xi, values=x, meta=meta)
