"""Projected Levenberg-Marquardt for small box-constrained least squares."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError

_LAMBDA_CEIL = 1e16


@dataclass
class LMDiagnostics:
    iterations: int
    grad_norm: float
    reason: str
    converged: bool
    max_iter_warning: bool
    n_evals: int
    costs: list[float] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "reason": self.reason,
            "converged": self.converged,
            "max_iter_warning": self.max_iter_warning,
            "n_evals": self.n_evals,
            "final_cost": self.costs[-1] if self.costs else None,
        }


def _scaled_gradient(r: np.ndarray, J: np.ndarray) -> float:
    # largest cosine between the residual and a Jacobian column (MINPACK gtol)
    rn = np.linalg.norm(r)
    if rn == 0.0:
        return 0.0
    cn = np.linalg.norm(J, axis=0)
    g = np.abs(J.T @ r)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.where(cn > 0, g / (cn * rn), 0.0)
    return float(cos.max()) if cos.size else 0.0


def lm_minimize(fun: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]], x0,
                lower=None, upper=None, project: Callable | None = None,
                max_iter: int = 200, grad_tol: float = 1e-10, step_tol: float = 1e-12,
                lambda0: float = 1e-3) -> tuple[np.ndarray, LMDiagnostics]:
    """Minimize ||r(x)||^2 where ``fun(x)`` returns ``(r, J)``.

    Damped Gauss-Newton steps solve (J'J + lam diag(J'J)) dx = -J'r; the
    damping is divided by 10 after an accepted step and multiplied by 10
    after a rejected one.  Iterates are mapped back into the box by
    ``project`` (default: clipping to ``[lower, upper]``).

    Stops when the largest residual/column cosine drops below
    ``grad_tol``, when the relative step is below ``step_tol``, when no
    damping yields a decrease, or after ``max_iter`` iterations (flagged in
    the diagnostics, not raised).
    """
    x = np.array(x0, dtype=float)
    n = x.size
    lo = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    hi = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    if project is None:
        def project(v):
            return np.clip(v, lo, hi)
    x = project(x)
    r, J = fun(x)
    evals = 1
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(J))):
        raise DomainError("residual or Jacobian is not finite at the initial point")
    cost = float(r @ r)
    costs = [cost]
    lam = lambda0
    it = 0
    while True:
        gnorm = _scaled_gradient(r, J)
        if gnorm < grad_tol:
            reason = "gradient"
            break
        if it >= max_iter:
            reason = "max_iter"
            break
        it += 1
        scale = np.linalg.norm(J, axis=0)
        scale[scale == 0.0] = 1.0
        accepted = False
        while lam < _LAMBDA_CEIL:
            aug = np.vstack([J, math.sqrt(lam) * np.diag(scale)])
            rhs = np.concatenate([-r, np.zeros(n)])
            dx = np.linalg.lstsq(aug, rhs, rcond=None)[0]
            x_new = project(x + dx)
            r_new, J_new = fun(x_new)
            evals += 1
            cost_new = float(r_new @ r_new)
            if math.isfinite(cost_new) and cost_new < cost:
                accepted = True
                lam = max(lam / 10.0, 1e-20)
                break
            lam *= 10.0
        if not accepted:
            reason = "stalled"
            break
        step = np.linalg.norm(x_new - x)
        x, r, J, cost = x_new, r_new, J_new, cost_new
        costs.append(cost)
        if step <= step_tol * (np.linalg.norm(x) + step_tol):
            gnorm = _scaled_gradient(r, J)
            reason = "step"
            break
    diag = LMDiagnostics(
        iterations=it,
        grad_norm=gnorm,
        reason=reason,
        converged=reason != "max_iter",
        max_iter_warning=reason == "max_iter",
        n_evals=evals,
        costs=costs,
    )
    return x, diag
