"""Cyclical covariance family, its spectral density and related checks.

The Gaussian noise driver has covariance

    B(t) = sum_j D_j cos(kappa_j t) / (1 + t^2)^(alpha_j / 2)

with spectral representation B(t) = int exp(i lam t) f(lam) dlam.  The
density of each component is expressed through McDonald's function K_nu
(modified Bessel function of the third kind) and is singular at
lam = +-kappa_j whenever alpha_j <= 1.
"""
from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Iterable, Sequence

import numpy as np
from scipy import integrate

from .errors import DivergenceError, DomainError, RangeError, SingularityError

if TYPE_CHECKING:  # pragma: no cover
    from .estimator import TrigParams
    from .hermite import TransformSpec

_LOG_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class Component:
    D: float
    alpha: float
    kappa: float


@dataclass(frozen=True)
class NoiseModel:
    """Mixture of damped cosines ``D cos(kappa t) / (1+t^2)^(alpha/2)``.

    Weights are nonnegative and sum to one, so ``B(0) = 1``; cycle
    frequencies must be strictly increasing.
    """

    components: tuple[Component, ...]

    def __post_init__(self):
        comps = tuple(
            c if isinstance(c, Component) else Component(*map(float, c))
            for c in self.components
        )
        object.__setattr__(self, "components", comps)
        if not comps:
            raise DomainError("noise model needs at least one component")
        for c in comps:
            if not (c.D >= 0 and math.isfinite(c.D)):
                raise DomainError(f"weight D must be >= 0, got {c.D}")
            if not (c.alpha > 0 and math.isfinite(c.alpha)):
                raise DomainError(f"alpha must be > 0, got {c.alpha}")
            if not (c.kappa >= 0 and math.isfinite(c.kappa)):
                raise DomainError(f"kappa must be >= 0, got {c.kappa}")
        if abs(sum(c.D for c in comps) - 1.0) > 1e-12:
            raise DomainError("weights D must sum to 1")
        kappas = [c.kappa for c in comps]
        if any(b <= a for a, b in zip(kappas, kappas[1:])):
            raise DomainError("kappas must be strictly increasing")

    @classmethod
    def single(cls, alpha: float, kappa: float = 0.5) -> "NoiseModel":
        return cls((Component(1.0, float(alpha), float(kappa)),))

    @property
    def alpha_min(self) -> float:
        return min(c.alpha for c in self.components)

    @property
    def kappas(self) -> tuple[float, ...]:
        return tuple(c.kappa for c in self.components)

    def to_record(self) -> list[dict]:
        return [{"D": c.D, "alpha": c.alpha, "kappa": c.kappa} for c in self.components]

    @classmethod
    def from_record(cls, record: Iterable[dict]) -> "NoiseModel":
        try:
            return cls(tuple(Component(float(r["D"]), float(r["alpha"]), float(r["kappa"]))
                             for r in record))
        except (KeyError, TypeError) as exc:
            raise DomainError(f"bad noise record: {exc}") from exc

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_record(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def covariance_at(model: NoiseModel, t):
    """Covariance B(t); accepts scalars or arrays of lags."""
    t = np.asarray(t, dtype=float)
    t2 = 1.0 + t * t
    out = np.zeros_like(t)
    for c in model.components:
        out = out + c.D * np.cos(c.kappa * t) * t2 ** (-0.5 * c.alpha)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# McDonald's function
# ---------------------------------------------------------------------------

def _z_cosh(z: float, u: float) -> float:
    if u < 700.0:
        return z * math.cosh(u)
    return math.exp(math.log(z) + u - math.log(2.0))


def _log_bessel_k(nu: float, z: float) -> float:
    # K_nu(z) = int_0^inf exp(-z cosh u) cosh(nu u) du  (s = e^u in the
    # half-line representation).  Work relative to the peak of the
    # dominant exponent so that tiny z / large nu do not overflow.
    if not (z > 0 and math.isfinite(z)):
        raise DomainError(f"bessel_k needs z > 0, got {z}")
    nu = abs(float(nu))
    ratio = nu / z
    u_star = math.asinh(ratio) if ratio < 1e150 else math.log(2.0 * nu) - math.log(z)
    g_star = -_z_cosh(z, u_star) + nu * u_star

    def integrand(u):
        return math.exp(-_z_cosh(z, u) + nu * u - g_star) * 0.5 * (1.0 + math.exp(-2.0 * nu * u))

    # integrand < e^-60 relative to the peak beyond u_hi
    u_hi = u_star + 1.0
    while -_z_cosh(z, u_hi) + nu * u_hi - g_star > -60.0:
        u_hi = u_star + 2.0 * (u_hi - u_star)
    total = 0.0
    for a, b in ((0.0, u_star), (u_star, u_hi)):
        if b > a:
            val, _ = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-13, limit=200)
            total += val
    return g_star + math.log(total)


def bessel_k(nu: float, z: float) -> float:
    """McDonald's function K_nu(z) by adaptive quadrature.

    Raises DomainError for z <= 0 and RangeError when the value
    overflows a double (z near zero with large |nu|).
    """
    log_k = _log_bessel_k(nu, z)
    if log_k > _LOG_MAX:
        raise RangeError(f"K_{nu}({z}) overflows (log value {log_k:.1f})")
    return math.exp(log_k)


def _z_pow_k(nu: float, z: float) -> float:
    """z^nu K_nu(z), continuous at z = 0 when nu > 0."""
    if z == 0.0:
        if nu > 0:
            return 2.0 ** (nu - 1.0) * math.gamma(nu)
        raise SingularityError("z^nu K_nu(z) is infinite at z = 0 for nu <= 0")
    log_v = _log_bessel_k(nu, z) + nu * math.log(z)
    if log_v > _LOG_MAX:
        raise RangeError("z^nu K_nu(z) overflows")
    return math.exp(log_v)


def c1(alpha: float) -> float:
    return 2.0 ** ((1.0 - alpha) / 2.0) / (math.sqrt(math.pi) * math.gamma(alpha / 2.0))


def c2(alpha: float) -> float:
    """Leading constant of the power-law singularity for 0 < alpha < 1."""
    return 1.0 / (2.0 * math.gamma(alpha) * math.cos(alpha * math.pi / 2.0))


def _component_density(alpha: float, kappa: float, lam: float, offset: float = 0.0) -> float:
    # evaluated at lam + offset; the distance to a singular point equal to
    # lam is then |offset| exactly, even when lam + offset rounds to lam
    nu = (alpha - 1.0) / 2.0
    try:
        return 0.5 * c1(alpha) * (_z_pow_k(nu, abs((lam + kappa) + offset))
                                  + _z_pow_k(nu, abs((lam - kappa) + offset)))
    except SingularityError:
        raise SingularityError(
            f"spectral density is singular at lambda={lam + offset} "
            f"(kappa={kappa}, alpha={alpha} <= 1)"
        ) from None


def _density(model: NoiseModel, lam: float, offset: float = 0.0) -> float:
    return sum(c.D * _component_density(c.alpha, c.kappa, lam, offset)
               for c in model.components if c.D > 0)


def spectral_density_at(model: NoiseModel, lam: float) -> float:
    """Spectral density f(lam) = sum_j D_j f_{alpha_j, kappa_j}(lam).

    Raises SingularityError exactly at +-kappa_j for components with
    alpha_j <= 1; finite there otherwise.
    """
    return _density(model, float(lam))


def singular_points(model: NoiseModel) -> list[float]:
    """Frequencies where f diverges (components with alpha <= 1)."""
    pts = set()
    for c in model.components:
        if c.D > 0 and c.alpha <= 1.0:
            pts.update((c.kappa, -c.kappa))
    return sorted(pts)


def _singular_exponent(model: NoiseModel, point: float) -> float | None:
    alphas = [c.alpha for c in model.components
              if c.D > 0 and c.alpha <= 1.0 and c.kappa == abs(point)]
    if not alphas:
        return None
    a = min(alphas)
    return a if a < 1.0 else 0.5


def spectral_integral(model: NoiseModel, weight: Callable[[float], float] | None = None,
                      limit: float = 200.0, epsrel: float = 1e-9) -> float:
    """int_{-limit}^{limit} f(lam) w(lam) dlam for an even weight w.

    The half line is split at the singular points; next to a singular
    point with exponent alpha - 1 the substitution u = |lam - kappa|^alpha
    turns the integrand regular.
    """
    w = weight or (lambda lam: 1.0)
    sing = [p for p in singular_points(model) if 0.0 <= p < limit]
    knots = sorted({0.0, limit, *sing, *(c.kappa for c in model.components if c.kappa < limit)})
    total = 0.0
    for a, b in zip(knots, knots[1:]):
        pa, pb = _singular_exponent(model, a), _singular_exponent(model, b)
        # substitution only within a unit neighbourhood of a singular end
        cuts = [a, b]
        if pa is not None:
            cuts.insert(1, a + min(1.0, (b - a) / 2.0))
        if pb is not None:
            cuts.insert(-1, b - min(1.0, (b - a) / 2.0))
        for lo, hi in zip(cuts, cuts[1:]):
            p_lo = pa if lo == a else None
            p_hi = pb if hi == b else None
            if p_lo is not None and p_hi is not None:
                mid = 0.5 * (lo + hi)
                total += _piece(model, w, lo, mid, p_lo, None, epsrel)
                total += _piece(model, w, mid, hi, None, p_hi, epsrel)
            else:
                total += _piece(model, w, lo, hi, p_lo, p_hi, epsrel)
    return 2.0 * total


def _piece(model, w, lo, hi, p_lo, p_hi, epsrel):
    if p_lo is None and p_hi is None:
        val, _ = integrate.quad(lambda lam: _density(model, lam) * w(lam), lo, hi,
                                epsabs=1e-13, epsrel=epsrel, limit=400)
        return val
    if p_lo is not None:
        p, base, sign = p_lo, lo, 1.0
    else:
        p, base, sign = p_hi, hi, -1.0

    def g(u):
        h = u ** (1.0 / p)
        if h == 0.0:
            return 0.0
        return _density(model, base, sign * h) * w(base + sign * h) * h / (p * u)

    val, _ = integrate.quad(g, 0.0, (hi - lo) ** p, epsabs=1e-13, epsrel=epsrel, limit=400)
    return val


def inverse_fourier(model: NoiseModel, t: float, limit: float = 200.0) -> float:
    """Recover B(t) = int f(lam) cos(lam t) dlam numerically."""
    t = float(t)
    if t == 0.0:
        return spectral_integral(model, limit=limit)
    return spectral_integral(model, lambda lam: math.cos(lam * t), limit=limit)


# ---------------------------------------------------------------------------
# j-fold convolutions
# ---------------------------------------------------------------------------

DEFAULT_TRUNCATION = 1.0e4
DEFAULT_GRID_STEP = 0.05


@functools.lru_cache(maxsize=256)
def _convolution_cached(model: NoiseModel, j: int, lam: float, truncation: float,
                        grid_step: float) -> float:
    n = int(math.ceil(truncation / grid_step))
    t = np.arange(n + 1) * grid_step
    vals = covariance_at(model, t) ** j * np.cos(lam * t)
    vals[0] *= 0.5
    vals[-1] *= 0.5
    # (1/2pi) int_{-T}^{T} = (1/pi) int_0^T for an even integrand
    return float(grid_step * vals.sum() / math.pi)


def spectral_convolution(model: NoiseModel, j: int, lam: float,
                         truncation: float = DEFAULT_TRUNCATION,
                         grid_step: float = DEFAULT_GRID_STEP) -> float:
    """j-fold convolution f^{(*j)}(lam) as the Fourier transform of B^j.

    Trapezoidal rule on [-truncation, truncation].  With ``grid_step=1``
    the sum runs over integer lags and returns the spectral density of
    the sampled sequence instead.
    """
    j = int(j)
    if j < 1:
        raise DomainError("j must be a positive integer")
    if truncation <= 0 or grid_step <= 0:
        raise DomainError("truncation and grid_step must be positive")
    if model.alpha_min * j <= 1.0:
        raise DivergenceError(
            f"B^{j} is not integrable: alpha*j = {model.alpha_min * j:g} <= 1"
        )
    return _convolution_cached(model, j, float(lam), float(truncation), float(grid_step))


def convolution_tail_bound(model: NoiseModel, j: int, truncation: float) -> float:
    """Bound on |f^{(*j)}| error from cutting the lag integral at ``truncation``."""
    a = model.alpha_min * j
    if a <= 1.0:
        raise DivergenceError("alpha*j <= 1")
    return truncation ** (1.0 - a) / ((a - 1.0) * math.pi)


# ---------------------------------------------------------------------------
# Condition checks
# ---------------------------------------------------------------------------

REGIMES = ("A4_case1", "A4_case2", "Iv2013_extension", "A4prime", "unknown")


@dataclass(frozen=True)
class ConditionReport:
    hermite_rank: int
    alpha_min: float
    regime: str
    noise_singularities: frozenset
    regression_atoms: frozenset
    a5_satisfied: bool


def classify_regime(alpha: float, m: int) -> str:
    if m == 1:
        if alpha > 1.0:
            return "A4_case1"
        if 0.5 < alpha <= 1.0:
            return "Iv2013_extension"
        if 0.0 < alpha < 0.5:
            return "A4prime"
        return "unknown"
    if m >= 2 and alpha * m > 1.0:
        return "A4_case2"
    return "unknown"


def condition_report(model: NoiseModel, transform: "TransformSpec",
                     theta: "TrigParams") -> ConditionReport:
    m = int(transform.rank)
    alpha = model.alpha_min
    noise = frozenset(s * k for k in model.kappas for s in (1.0, -1.0))
    atoms = frozenset(float(p) for p in theta.frequencies)
    return ConditionReport(
        hermite_rank=m,
        alpha_min=alpha,
        regime=classify_regime(alpha, m),
        noise_singularities=noise,
        regression_atoms=atoms,
        a5_satisfied=not (noise & atoms),
    )


def experiment_models(alphas: Sequence[float] = (0.25, 0.45, 0.85, 1.5, 2.5),
                      kappa: float = 0.5) -> list[NoiseModel]:
    return [NoiseModel.single(a, kappa) for a in alphas]
