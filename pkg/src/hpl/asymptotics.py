"""Normalized functionals, LSE deviation scaling and the limiting covariance.

For a single harmonic the weighted noise sums

    zeta_X = sum_t W_X(t) eps(t) / W_X(T),   W_X(T)^2 = sum_t W_X(t)^2

with weights cos(phi t), sin(phi t) and t(B cos(phi t) - A sin(phi t))
share their limit law with the normalized estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, DomainError, UnsupportedError
from .estimator import TrigParams
from .hermite import DEFAULT_K_MAX, TransformSpec
from .spectral_cov import (
    DEFAULT_GRID_STEP,
    DEFAULT_TRUNCATION,
    NoiseModel,
    convolution_tail_bound,
    spectral_convolution,
)


@dataclass(frozen=True)
class ZetaTriple:
    zeta_a: float
    zeta_b: float
    zeta_phi: float
    T: int
    weights_norm: tuple[float, float, float]

    def as_array(self) -> np.ndarray:
        return np.array([self.zeta_a, self.zeta_b, self.zeta_phi])


def zeta_weights(theta: TrigParams, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Weight rows (3, T) and their norms (W_A(T), W_B(T), W_phi(T))."""
    if theta.N != 1:
        raise UnsupportedError("zeta functionals are defined for a single harmonic")
    if T < 2:
        raise DomainError("need T >= 2")
    A, B, phi = theta.harmonics[0]
    t = np.arange(1, T + 1, dtype=float)
    c, s = np.cos(phi * t), np.sin(phi * t)
    W = np.vstack([c, s, t * (B * c - A * s)])
    return W, np.sqrt(np.einsum("ij,ij->i", W, W))


def zeta_batch(noise: np.ndarray, theta: TrigParams) -> np.ndarray:
    """Zeta triples for each row of an (n, T) noise array, shape (n, 3)."""
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    W, norms = zeta_weights(theta, noise.shape[1])
    return (noise @ W.T) / norms


def zeta_functionals(noise, theta: TrigParams) -> ZetaTriple:
    values = np.asarray(getattr(noise, "values", noise), dtype=float)
    if theta.N != 1:
        raise UnsupportedError("zeta functionals are defined for a single harmonic")
    W, norms = zeta_weights(theta, values.size)
    z = (W @ values) / norms
    return ZetaTriple(float(z[0]), float(z[1]), float(z[2]), values.size, tuple(map(float, norms)))


def normalized_deviation(theta_hat: TrigParams, theta: TrigParams, T: int) -> np.ndarray:
    """(sqrt(T)(A_hat - A), sqrt(T)(B_hat - B), T^1.5 (phi_hat - phi)) per harmonic."""
    if theta_hat.N != theta.N:
        raise DomainError("harmonic counts differ")
    d = (theta_hat.to_vector() - theta.to_vector()).reshape(-1, 3)
    d *= np.array([math.sqrt(T), math.sqrt(T), T ** 1.5])
    return d.ravel()


@dataclass(frozen=True)
class GammaMatrix:
    blocks: tuple[np.ndarray, ...]
    series_terms_used: int
    truncation_error_bound: float
    spectral_values: tuple[float, ...]

    @property
    def full(self) -> np.ndarray:
        n = len(self.blocks)
        out = np.zeros((3 * n, 3 * n))
        for k, b in enumerate(self.blocks):
            out[3 * k:3 * k + 3, 3 * k:3 * k + 3] = b
        return out

    def to_record(self) -> dict:
        return {
            "blocks": [b.tolist() for b in self.blocks],
            "series_terms_used": self.series_terms_used,
            "truncation_error_bound": self.truncation_error_bound,
            "spectral_values": list(self.spectral_values),
        }


def structure_matrix(A: float, B: float, form: str = "corrected") -> np.ndarray:
    """3x3 shape of a Gamma block before the spectral scale factor.

    ``"corrected"`` carries A^2 + 4B^2 and 4A^2 + B^2 on the amplitude
    diagonal: the inverse of the limiting information matrix for
    (A, B, phi), positive definite for every A^2 + B^2 > 0.  ``"printed"``
    uses A^2 + B^2 on both, which is indefinite when |A| and |B| are close.
    """
    if form == "corrected":
        a_diag, b_diag = A * A + 4 * B * B, 4 * A * A + B * B
    elif form == "printed":
        a_diag = b_diag = A * A + B * B
    else:
        raise DomainError(f"unknown matrix form {form!r}")
    return np.array([
        [a_diag, -3 * A * B, -6 * B],
        [-3 * A * B, b_diag, 6 * A],
        [-6 * B, 6 * A, 12.0],
    ])


def gamma_matrix(theta: TrigParams, model: NoiseModel, transform: TransformSpec,
                 j_max: int = DEFAULT_K_MAX, truncation: float = DEFAULT_TRUNCATION,
                 grid_step: float = DEFAULT_GRID_STEP, form: str = "corrected") -> GammaMatrix:
    """Block-diagonal limiting covariance of the normalized LSE.

    Block k is 4 pi / (A_k^2 + B_k^2) * sum_{j=m}^{j_max} C_j^2/j! f^{(*j)}(phi_k)
    times :func:`structure_matrix`.  The sum is the spectral density of
    G(xi) at phi_k.
    """
    m = transform.rank
    alpha = model.alpha_min
    if alpha * m <= 1.0:
        raise DivergenceError(f"alpha*m = {alpha * m:g} <= 1: no Gaussian limit with this rate")
    j_top = min(j_max, len(transform.coefficients))
    terms = [j for j in range(m, j_top + 1) if transform.weight(j) != 0.0]
    blocks, densities = [], []
    bound = 0.0
    for j in terms:
        bound += transform.weight(j) * convolution_tail_bound(model, j, truncation)
    # coefficients beyond j_max: f^{(*j)} <= (1/2pi) int (1+t^2)^(-alpha m / 2) dt
    am = alpha * m
    sup_f = math.gamma((am - 1) / 2) / (2 * math.sqrt(math.pi) * math.gamma(am / 2))
    tail = sum(transform.weight(j) for j in range(j_top + 1, len(transform.coefficients) + 1))
    bound += tail * sup_f
    entry_bound = 0.0
    for A, B, phi in theta.harmonics:
        dens = sum(transform.weight(j) * spectral_convolution(model, j, phi, truncation, grid_step)
                   for j in terms)
        densities.append(dens)
        scale = 4 * math.pi / (A * A + B * B)
        M = structure_matrix(A, B, form)
        blocks.append(scale * dens * M)
        entry_bound = max(entry_bound, scale * bound * float(np.abs(M).max()))
    return GammaMatrix(tuple(blocks), len(terms), entry_bound, tuple(densities))
