"""Trigonometric regression and its Walker-sense least-squares estimate."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import fft as sp_fft

from .errors import DomainError, InitializationError
from .lm import LMDiagnostics, lm_minimize

PHI_MAX = math.nextafter(math.pi, 0.0)
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class TrigParams:
    """theta = (A_1, B_1, phi_1, ..., A_N, B_N, phi_N) with frequency bounds.

    Frequencies are strictly increasing and lie in the closed box
    ``[phi_lower, phi_upper]`` (estimates may sit on its boundary).
    """

    harmonics: tuple[tuple[float, float, float], ...]
    phi_lower: float = 0.0
    phi_upper: float = PHI_MAX

    def __post_init__(self):
        hs = tuple(tuple(float(v) for v in h) for h in self.harmonics)
        object.__setattr__(self, "harmonics", hs)
        if not hs or any(len(h) != 3 for h in hs):
            raise DomainError("harmonics must be non-empty (A, B, phi) triples")
        if not (0.0 <= self.phi_lower < self.phi_upper < math.pi):
            raise DomainError("need 0 <= phi_lower < phi_upper < pi")
        for A, B, phi in hs:
            if not A * A + B * B > 0:
                raise DomainError("each harmonic needs A^2 + B^2 > 0")
        phis = [h[2] for h in hs]
        if phis[0] < self.phi_lower or phis[-1] > self.phi_upper:
            raise DomainError("frequencies outside the bounds")
        if any(b <= a for a, b in zip(phis, phis[1:])):
            raise DomainError("frequencies must be strictly increasing")

    @classmethod
    def single(cls, A: float, B: float, phi: float, **bounds) -> "TrigParams":
        return cls(((A, B, phi),), **bounds)

    @classmethod
    def from_vector(cls, v, phi_lower: float = 0.0, phi_upper: float = PHI_MAX) -> "TrigParams":
        v = np.asarray(v, dtype=float).reshape(-1, 3)
        return cls(tuple(map(tuple, v)), phi_lower, phi_upper)

    def to_vector(self) -> np.ndarray:
        return np.array(self.harmonics, dtype=float).ravel()

    @property
    def N(self) -> int:
        return len(self.harmonics)

    @property
    def frequencies(self) -> tuple[float, ...]:
        return tuple(h[2] for h in self.harmonics)

    def to_record(self) -> dict:
        return {
            "harmonics": [{"A": A, "B": B, "phi": p} for A, B, p in self.harmonics],
            "phi_bounds": [self.phi_lower, self.phi_upper],
        }

    @classmethod
    def from_record(cls, rec) -> "TrigParams":
        if isinstance(rec, dict) and "harmonics" in rec:
            hs = tuple((h["A"], h["B"], h["phi"]) for h in rec["harmonics"])
            lo, hi = rec.get("phi_bounds", (0.0, PHI_MAX))
            return cls(hs, float(lo), float(hi))
        if isinstance(rec, dict):
            return cls.single(rec["A"], rec["B"], rec["phi"])
        return cls.from_vector(rec)


@dataclass(frozen=True)
class WalkerSet:
    """Admissible frequencies: [max(phi_lower, T^-1/2), phi_upper], gaps >= T^-1/2."""

    T: int
    lower: float
    upper: float
    min_separation: float

    @classmethod
    def for_horizon(cls, T: int, phi_lower: float = 0.0, phi_upper: float = PHI_MAX) -> "WalkerSet":
        if T < 1:
            raise DomainError("T must be positive")
        s = 1.0 / math.sqrt(T)
        lower = max(phi_lower, s)
        if not lower < phi_upper:
            raise DomainError("empty Walker set")
        return cls(int(T), lower, float(phi_upper), s)

    def admits(self, phis: Sequence[float]) -> bool:
        phis = list(phis)
        if any(p < self.lower or p > self.upper for p in phis):
            return False
        return all(b - a >= self.min_separation * (1 - 1e-12) for a, b in zip(phis, phis[1:]))

    def project(self, phis: np.ndarray) -> np.ndarray:
        """Clip into the box, then push neighbours apart to the minimum gap."""
        p = np.clip(np.sort(phis), self.lower, self.upper)
        s = self.min_separation
        for k in range(1, p.size):
            if p[k] - p[k - 1] < s:
                p[k] = p[k - 1] + s
        if p.size and p[-1] > self.upper:
            p[-1] = self.upper
            for k in range(p.size - 2, -1, -1):
                if p[k + 1] - p[k] < s:
                    p[k] = p[k + 1] - s
        return p


# ---------------------------------------------------------------------------
# Regression function
# ---------------------------------------------------------------------------

def regression_value(theta: TrigParams, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for A, B, phi in theta.harmonics:
        out = out + A * np.cos(phi * t) + B * np.sin(phi * t)
    return out


def _value_and_jacobian(v: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h = v.reshape(-1, 3)
    val = np.zeros_like(t)
    jac = np.empty(t.shape + (v.size,))
    for k, (A, B, phi) in enumerate(h):
        c, s = np.cos(phi * t), np.sin(phi * t)
        val += A * c + B * s
        jac[..., 3 * k] = c
        jac[..., 3 * k + 1] = s
        jac[..., 3 * k + 2] = t * (B * c - A * s)
    return val, jac


def regression_eval(theta: TrigParams, t):
    """g(t, theta) and its gradient (cos phi t, sin phi t, t(B cos phi t - A sin phi t)) per harmonic."""
    t_arr = np.asarray(t, dtype=float)
    val, jac = _value_and_jacobian(theta.to_vector(), t_arr)
    if t_arr.ndim == 0:
        return float(val), jac
    return val, jac


def _values(x) -> np.ndarray:
    values = getattr(x, "values", x)
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise DomainError("observations must be a non-empty 1-d series")
    return values


def objective_qt(theta: TrigParams, x) -> float:
    """Q_T = (1/T) sum_{t=1}^T (x(t) - g(t, theta))^2."""
    xv = _values(x)
    t = np.arange(1, xv.size + 1, dtype=float)
    r = xv - regression_value(theta, t)
    return float(r @ r) / xv.size


def objective_gradient(theta: TrigParams, x) -> np.ndarray:
    xv = _values(x)
    t = np.arange(1, xv.size + 1, dtype=float)
    val, jac = _value_and_jacobian(theta.to_vector(), t)
    return -2.0 / xv.size * (jac.T @ (xv - val))


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def _design(phis: Sequence[float], t: np.ndarray) -> np.ndarray:
    cols = []
    for p in phis:
        cols += [np.cos(p * t), np.sin(p * t)]
    return np.column_stack(cols)


def linear_amplitudes(x: np.ndarray, phis: Sequence[float]) -> np.ndarray:
    """Least-squares (A_k, B_k) for fixed frequencies, shape (N, 2)."""
    t = np.arange(1, x.size + 1, dtype=float)
    coef = np.linalg.lstsq(_design(phis, t), x, rcond=None)[0]
    return coef.reshape(-1, 2)


def _golden_max(f, a: float, b: float, tol: float) -> float:
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def periodogram_init(x, N: int, walker: WalkerSet, oversample: int = 4) -> TrigParams:
    """Initial theta from periodogram peaks inside the Walker set.

    Peaks are taken one at a time from the periodogram of the residual
    left after fitting the amplitudes of the peaks already chosen, so a
    strong tone's sidelobes do not mask a weaker one.  Each peak is
    refined by golden-section search over its neighbouring bins.
    """
    xv = _values(x)
    T = xv.size
    if T < 16:
        raise DomainError("periodogram initialization needs T >= 16")
    if N < 1:
        raise DomainError("N must be positive")
    t = np.arange(1, T + 1, dtype=float)
    n_fft = sp_fft.next_fast_len(oversample * T)
    freqs = 2.0 * np.pi * np.arange(n_fft // 2 + 1) / n_fft
    step = freqs[1]
    in_box = (freqs >= walker.lower) & (freqs <= walker.upper)

    def power(resid, phi):
        return abs(np.sum(resid * np.exp(-1j * phi * t))) ** 2

    chosen: list[float] = []
    resid = xv
    for _ in range(N):
        spec = np.abs(sp_fft.rfft(resid, n_fft)) ** 2
        ok = in_box.copy()
        for c in chosen:
            ok &= np.abs(freqs - c) >= walker.min_separation
        if not ok.any():
            raise InitializationError(
                f"only {len(chosen)} admissible peaks found, {N} requested"
            )
        k = int(np.argmax(np.where(ok, spec, -np.inf)))
        a = max(freqs[k] - step, walker.lower)
        b = min(freqs[k] + step, walker.upper)
        for c in chosen:
            if c < freqs[k]:
                a = max(a, c + walker.min_separation)
            else:
                b = min(b, c - walker.min_separation)
        phi = _golden_max(lambda p: power(resid, p), a, b, 1e-3 / T) if b > a else freqs[k]
        chosen.append(float(phi))
        chosen.sort()
        amps = linear_amplitudes(xv, chosen)
        resid = xv - _design(chosen, t) @ amps.ravel()
    amps = linear_amplitudes(xv, chosen)
    hs = tuple((float(A), float(B), p) for (A, B), p in zip(amps, chosen))
    return TrigParams(hs, walker.lower, walker.upper)


# ---------------------------------------------------------------------------
# Walker LSE
# ---------------------------------------------------------------------------

@dataclass
class LSEOptions:
    max_iter: int = 200
    grad_tol: float = 1e-10
    step_tol: float = 1e-12
    lambda0: float = 1e-3
    profile_amplitudes: bool = False


@dataclass
class LSEDiagnostics:
    init: TrigParams
    lm: LMDiagnostics
    objective: float
    extra: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.lm.converged

    def to_record(self) -> dict:
        return {"init": self.init.to_record(), "objective": self.objective,
                **self.lm.to_record(), **self.extra}


def walker_lse(x, N: int, walker: WalkerSet, opts: LSEOptions | None = None,
               init: TrigParams | None = None) -> tuple[TrigParams, LSEDiagnostics]:
    """Minimize Q_T over amplitudes in R and frequencies in the Walker set."""
    opts = opts or LSEOptions()
    xv = _values(x)
    T = xv.size
    if T < 16:
        raise DomainError("walker_lse needs T >= 16")
    init = init or periodogram_init(xv, N, walker)
    t = np.arange(1, T + 1, dtype=float)
    lm_kw = dict(max_iter=opts.max_iter, grad_tol=opts.grad_tol, step_tol=opts.step_tol,
                 lambda0=opts.lambda0)

    if opts.profile_amplitudes:
        phis, lm_diag = _profiled_fit(xv, t, np.array(init.frequencies), walker, lm_kw)
        amps = linear_amplitudes(xv, phis)
        v = np.column_stack([amps, phis]).ravel()
    else:
        phi_idx = np.arange(2, 3 * N, 3)

        def project(v):
            v = v.copy()
            order = np.argsort(v[phi_idx])
            v = v.reshape(-1, 3)[order].ravel()
            v[phi_idx] = walker.project(v[phi_idx])
            return v

        def fun(v):
            val, jac = _value_and_jacobian(v, t)
            return val - xv, jac

        v, lm_diag = lm_minimize(fun, init.to_vector(), project=project, **lm_kw)
    theta_hat = TrigParams.from_vector(v, walker.lower, walker.upper)
    diag = LSEDiagnostics(init, lm_diag, objective_qt(theta_hat, xv))
    return theta_hat, diag


def _profiled_fit(xv, t, phi0, walker, lm_kw):
    # variable projection: amplitudes eliminated by linear least squares,
    # Kaufman's approximation to the Jacobian of the projected residual
    def fun(phis):
        X = _design(phis, t)
        coef, *_ = np.linalg.lstsq(X, xv, rcond=None)
        r = X @ coef - xv
        D = np.empty((t.size, phis.size))
        for k, p in enumerate(phis):
            A, B = coef[2 * k], coef[2 * k + 1]
            D[:, k] = t * (B * np.cos(p * t) - A * np.sin(p * t))
        D -= X @ np.linalg.lstsq(X, D, rcond=None)[0]
        return r, D

    return lm_minimize(fun, phi0, project=walker.project, **lm_kw)
