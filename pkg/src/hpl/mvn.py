"""Multivariate normality battery: Henze-Zirkler, Doornik-Hansen, Mardia.

Sample covariances use the n - 1 denominator throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DomainError, RankError

TESTS = ("HZ", "DH", "MardiaSkew", "MardiaKurt")


@dataclass(frozen=True)
class MvnTestResult:
    test: str
    statistic: float
    p_value: float
    n: int
    d: int

    def to_record(self) -> dict:
        return {"test": self.test, "statistic": self.statistic, "p_value": self.p_value,
                "n": self.n, "d": self.d}


def _as_sample(sample) -> np.ndarray:
    x = np.asarray(sample, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DomainError("sample must be an n x d matrix")
    n, d = x.shape
    if n <= d:
        raise DomainError(f"need n > d, got n={n}, d={d}")
    return x


def _whiten(x: np.ndarray) -> np.ndarray:
    """Centered rows times S^{-1/2}; inner products give Mahalanobis forms."""
    xc = x - x.mean(axis=0)
    S = xc.T @ xc / (x.shape[0] - 1)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise RankError("sample covariance is singular") from None
    if np.linalg.cond(S) > 1e14:
        raise RankError("sample covariance is numerically singular")
    return np.linalg.solve(L, xc.T).T


def mahalanobis_squared(sample) -> np.ndarray:
    """d_i^2 = (x_i - xbar)' S^{-1} (x_i - xbar)."""
    y = _whiten(_as_sample(sample))
    return np.einsum("ij,ij->i", y, y)


def chi_square_qq(distances, d: int) -> np.ndarray:
    """Rows (chi2_d quantile at (i - 0.5)/n, i-th smallest distance)."""
    if d < 1:
        raise DomainError("d must be >= 1")
    dist = np.sort(np.asarray(distances, dtype=float))
    n = dist.size
    q = stats.chi2.ppf((np.arange(1, n + 1) - 0.5) / n, d)
    return np.column_stack([q, dist])


def henze_zirkler(sample) -> MvnTestResult:
    x = _as_sample(sample)
    n, d = x.shape
    y = _whiten(x)
    b = (((2 * d + 1) * n / 4.0) ** (1.0 / (d + 4))) / math.sqrt(2.0)
    b2 = b * b
    dii = np.einsum("ij,ij->i", y, y)
    gram = y @ y.T
    dij = dii[:, None] + dii[None, :] - 2.0 * gram
    hz = n * (
        np.exp(-0.5 * b2 * dij).sum() / n ** 2
        - 2.0 * (1 + b2) ** (-d / 2) * np.exp(-b2 * dii / (2 * (1 + b2))).sum() / n
        + (1 + 2 * b2) ** (-d / 2)
    )
    # lognormal approximation to the null law
    a = 1 + 2 * b2
    w = (1 + b2) * (1 + 3 * b2)
    b4, b8 = b2 * b2, b2 ** 4
    mu = 1 - a ** (-d / 2) * (1 + d * b2 / a + d * (d + 2) * b4 / (2 * a * a))
    var = (2 * (1 + 4 * b2) ** (-d / 2)
           + 2 * a ** (-d) * (1 + 2 * d * b4 / a ** 2 + 3 * d * (d + 2) * b8 / (4 * a ** 4))
           - 4 * w ** (-d / 2) * (1 + 3 * d * b4 / (2 * w) + d * (d + 2) * b8 / (2 * w * w)))
    log_mu = math.log(math.sqrt(mu ** 4 / (var + mu ** 2)))
    log_sd = math.sqrt(math.log((var + mu ** 2) / mu ** 2))
    p = float(stats.lognorm.sf(hz, s=log_sd, scale=math.exp(log_mu))) if hz > 0 else 1.0
    return MvnTestResult("HZ", float(hz), p, n, d)


def _dagostino_skew(sqrt_b1: np.ndarray, n: int) -> np.ndarray:
    beta = 3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3) / ((n - 2) * (n + 5) * (n + 7) * (n + 9))
    w2 = -1.0 + math.sqrt(2.0 * (beta - 1.0))
    delta = 1.0 / math.sqrt(math.log(math.sqrt(w2)))
    y = sqrt_b1 * math.sqrt((w2 - 1.0) / 2.0 * (n + 1) * (n + 3) / (6.0 * (n - 2)))
    return delta * np.log(y + np.sqrt(y * y + 1.0))


def _dh_kurtosis(b1: np.ndarray, b2: np.ndarray, n: int) -> np.ndarray:
    delta = (n - 3) * (n + 1) * (n * n + 15 * n - 4)
    a = (n - 2) * (n + 5) * (n + 7) * (n * n + 27 * n - 70) / (6.0 * delta)
    c = (n - 7) * (n + 5) * (n + 7) * (n * n + 2 * n - 5) / (6.0 * delta)
    k = (n + 5) * (n + 7) * (n ** 3 + 37 * n * n + 11 * n - 313) / (12.0 * delta)
    alpha = a + b1 * c
    chi = (b2 - 1.0 - b1) * 2.0 * k
    return (np.cbrt(chi / (2.0 * alpha)) - 1.0 + 1.0 / (9.0 * alpha)) * np.sqrt(9.0 * alpha)


def doornik_hansen(sample) -> MvnTestResult:
    """Omnibus test on marginal skewness/kurtosis after decorrelation.

    Invariant under translation and per-coordinate rescaling; not under
    general linear maps, since decorrelation fixes a particular rotation.
    """
    x = _as_sample(sample)
    n, d = x.shape
    if n < 8:
        raise DomainError("Doornik-Hansen needs n >= 8")
    xc = x - x.mean(axis=0)
    sd = np.sqrt((xc * xc).sum(axis=0) / (n - 1))
    if np.any(sd == 0):
        raise RankError("a column is constant")
    z = xc / sd
    R = z.T @ z / (n - 1)
    lam, H = np.linalg.eigh(R)
    if lam.min() <= 1e-12 * lam.max():
        raise RankError("correlation matrix is singular")
    y = z @ H @ np.diag(lam ** -0.5) @ H.T
    yc = y - y.mean(axis=0)
    m2 = (yc ** 2).mean(axis=0)
    sqrt_b1 = (yc ** 3).mean(axis=0) / m2 ** 1.5
    b2 = (yc ** 4).mean(axis=0) / m2 ** 2
    z1 = _dagostino_skew(sqrt_b1, n)
    z2 = _dh_kurtosis(sqrt_b1 ** 2, b2, n)
    E = float(np.sum(z1 ** 2) + np.sum(z2 ** 2))
    return MvnTestResult("DH", E, float(stats.chi2.sf(E, 2 * d)), n, d)


def mardia_stats(sample) -> tuple[MvnTestResult, MvnTestResult]:
    x = _as_sample(sample)
    n, d = x.shape
    y = _whiten(x)
    m = y @ y.T
    b1 = float((m ** 3).sum() / n ** 2)
    b2 = float((np.diag(m) ** 2).mean())
    df = d * (d + 1) * (d + 2) / 6.0
    skew_stat = n * b1 / 6.0
    skew = MvnTestResult("MardiaSkew", skew_stat, float(stats.chi2.sf(skew_stat, df)), n, d)
    zk = (b2 - d * (d + 2)) / math.sqrt(8.0 * d * (d + 2) / n)
    kurt = MvnTestResult("MardiaKurt", b2, float(2.0 * stats.norm.sf(abs(zk))), n, d)
    return skew, kurt


def run_tests(sample, tests=("HZ", "DH", "MardiaSkew", "MardiaKurt")) -> dict[str, MvnTestResult]:
    out = {}
    if "HZ" in tests:
        out["HZ"] = henze_zirkler(sample)
    if "DH" in tests:
        out["DH"] = doornik_hansen(sample)
    if "MardiaSkew" in tests or "MardiaKurt" in tests:
        skew, kurt = mardia_stats(sample)
        out.update({r.test: r for r in (skew, kurt) if r.test in tests})
    return out


@dataclass(frozen=True)
class Ellipsoid:
    mean: np.ndarray
    cov: np.ndarray
    c: float
    directions: np.ndarray  # columns are principal axes
    half_lengths: np.ndarray

    def contains(self, x) -> np.ndarray:
        """(x - mu)' cov^{-1} (x - mu) <= c^2, row-wise."""
        diff = np.atleast_2d(np.asarray(x, dtype=float)) - self.mean
        proj = diff @ self.directions
        q = ((proj / (self.half_lengths / self.c)) ** 2).sum(axis=1)
        return q <= self.c ** 2

    def axis_endpoints(self) -> np.ndarray:
        """Rows mu +- c sqrt(lambda_i) e_i, ordered (+e_1, -e_1, +e_2, ...)."""
        pts = []
        for i in range(self.half_lengths.size):
            step = self.half_lengths[i] * self.directions[:, i]
            pts += [self.mean + step, self.mean - step]
        return np.array(pts)


def contour_ellipsoid(mean, cov, c: float) -> Ellipsoid:
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if c <= 0:
        raise DomainError("c must be positive")
    if cov.shape != (mean.size, mean.size) or not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-14):
        raise DomainError("cov must be a symmetric d x d matrix")
    lam, vecs = np.linalg.eigh(cov)
    if lam.min() <= 0:
        raise DomainError("cov is not positive definite")
    order = np.argsort(lam)[::-1]
    lam, vecs = lam[order], vecs[:, order]
    return Ellipsoid(mean, cov, float(c), vecs, c * np.sqrt(lam))
