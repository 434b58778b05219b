"""Special functions and a quasi-Newton minimizer for likelihood fitting.

The log-gamma family is delegated to scipy.special, which meets the 1e-12
relative accuracy requirement out of the box. The optimizer is a BFGS with
Armijo backtracking: the likelihoods are smooth and low-dimensional, and a
self-contained implementation gives us a stable termination contract.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError, NonFiniteObjective


def _check_positive(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x <= 0.0):
        raise DomainError("argument must be finite and > 0")
    return x


def lgamma_fn(x):
    """log Gamma(x) for x > 0."""
    return special.gammaln(_check_positive(x))


def digamma_fn(x):
    """d/dx log Gamma(x) for x > 0."""
    return special.digamma(_check_positive(x))


def trigamma_fn(x):
    """d^2/dx^2 log Gamma(x) for x > 0."""
    return special.polygamma(1, _check_positive(x))


class TerminationReason(enum.Enum):
    GRADIENT_TOL = "GradientTol"
    STEP_TOL = "StepTol"
    FUNCTION_TOL = "FunctionTol"
    MAX_ITER = "MaxIter"


@dataclass(frozen=True)
class OptimizerOptions:
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    step_tolerance: float = 1e-12
    function_tolerance: float = 1e-12
    verbose: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if min(self.gradient_tolerance, self.step_tolerance, self.function_tolerance) <= 0:
            raise ValueError("tolerances must be > 0")


@dataclass(frozen=True)
class OptimResult:
    argmin: np.ndarray
    value: float
    gradient_norm: float
    iterations: int
    converged: bool
    termination_reason: TerminationReason


def _fd_steps(x: np.ndarray) -> np.ndarray:
    return np.maximum(1e-6, 1e-6 * np.abs(x))


def finite_diff_gradient(f, x: np.ndarray) -> np.ndarray:
    """Central-difference gradient with magnitude-scaled steps."""
    x = np.asarray(x, dtype=float)
    h = _fd_steps(x)
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        fp, fm = f(xp), f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteObjective(f"non-finite objective near component {i}")
        g[i] = (fp - fm) / (2.0 * h[i])
    return g


def numerical_hessian(f, x: np.ndarray) -> np.ndarray:
    """Central second differences, symmetrized as (H + H^T)/2."""
    x = np.asarray(x, dtype=float)
    m = x.size
    h = np.maximum(1e-4, 1e-4 * np.abs(x))
    f0 = f(x)
    if not np.isfinite(f0):
        raise NonFiniteObjective("objective non-finite at expansion point")
    H = np.empty((m, m))
    for i in range(m):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        fp, fm = f(xp), f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteObjective(f"non-finite objective near component {i}")
        H[i, i] = (fp - 2.0 * f0 + fm) / h[i] ** 2
        for j in range(i + 1, m):
            xpp = x.copy()
            xpm = x.copy()
            xmp = x.copy()
            xmm = x.copy()
            xpp[[i, j]] += [h[i], h[j]]
            xpm[i] += h[i]
            xpm[j] -= h[j]
            xmp[i] -= h[i]
            xmp[j] += h[j]
            xmm[[i, j]] -= [h[i], h[j]]
            vals = np.array([f(xpp), f(xpm), f(xmp), f(xmm)])
            if not np.all(np.isfinite(vals)):
                raise NonFiniteObjective(f"non-finite objective near components {i},{j}")
            H[i, j] = H[j, i] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * h[i] * h[j])
    return 0.5 * (H + H.T)


_ARMIJO_C1 = 1e-4
_BACKTRACK = 0.5
_MAX_BACKTRACKS = 60


def minimize(objective, x0, gradient=None, opts: OptimizerOptions | None = None) -> OptimResult:
    """BFGS with Armijo backtracking line search.

    The objective may return +inf outside its domain; the line search simply
    shrinks the step until it is finite again. Deterministic given inputs.
    """
    if opts is None:
        opts = OptimizerOptions()
    x = np.asarray(x0, dtype=float).copy()
    if gradient is None:
        gradient = lambda v: finite_diff_gradient(objective, v)  # noqa: E731

    fx = objective(x)
    if not np.isfinite(fx):
        raise NonFiniteObjective("objective not finite at starting point")
    g = np.asarray(gradient(x), dtype=float)
    m = x.size
    H = np.eye(m)  # inverse Hessian approximation
    first_update = True

    reason = TerminationReason.MAX_ITER
    iterations = 0
    for iteration in range(1, opts.max_iterations + 1):
        iterations = iteration
        gnorm = np.max(np.abs(g))
        if gnorm < opts.gradient_tolerance:
            iterations = iteration - 1
            reason = TerminationReason.GRADIENT_TOL
            break

        d = -H @ g
        slope = float(d @ g)
        if slope >= 0.0:  # reset on loss of descent direction
            H = np.eye(m)
            d = -g
            slope = -float(g @ g)
            first_update = True

        # Try the minimizer of the quadratic fit through (0, fx, slope) and
        # (1, f(x+d)) first; on quadratic objectives this is an exact line
        # search, which gives BFGS its finite-termination behaviour.
        t = 1.0
        accepted = False
        fx_new = objective(x + d)
        if np.isfinite(fx_new):
            denom = fx_new - fx - slope
            if denom > 0.0:
                t_star = -slope / (2.0 * denom)
                if 1e-10 < t_star < 1e10:
                    f_star = objective(x + t_star * d)
                    if (
                        np.isfinite(f_star)
                        and f_star <= fx + _ARMIJO_C1 * t_star * slope
                        and f_star <= fx_new
                    ):
                        t, fx_new, accepted = t_star, f_star, True
            if not accepted and fx_new <= fx + _ARMIJO_C1 * slope:
                accepted = True

        if not accepted:
            for _ in range(_MAX_BACKTRACKS):
                t *= _BACKTRACK
                fx_new = objective(x + t * d)
                if np.isfinite(fx_new) and fx_new <= fx + _ARMIJO_C1 * t * slope:
                    accepted = True
                    break
        x_new = x + t * d
        if not accepted:
            if not np.isfinite(fx_new):
                raise NonFiniteObjective("line search could not recover a finite objective")
            # No Armijo decrease at the smallest step: treat as stalled.
            reason = TerminationReason.STEP_TOL
            break

        step = t * d
        g_new = np.asarray(gradient(x_new), dtype=float)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if first_update:
                H *= sy / float(y @ y)
                first_update = False
            rho = 1.0 / sy
            Hy = H @ y
            H -= rho * (np.outer(s, Hy) + np.outer(Hy, s))
            H += (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)

        f_change = abs(fx - fx_new)
        x, fx, g = x_new, fx_new, g_new

        if opts.verbose:
            print(f"iter {iteration}: f={fx:.10g} |g|={np.max(np.abs(g)):.3e} t={t:.3e}")

        if np.max(np.abs(g)) < opts.gradient_tolerance:
            reason = TerminationReason.GRADIENT_TOL
            break
        if np.max(np.abs(step)) < opts.step_tolerance:
            reason = TerminationReason.STEP_TOL
            break
        if f_change < opts.function_tolerance * (1.0 + abs(fx)):
            reason = TerminationReason.FUNCTION_TOL
            break

    return OptimResult(
        argmin=x,
        value=float(fx),
        gradient_norm=float(np.max(np.abs(g))),
        iterations=iterations,
        converged=reason is not TerminationReason.MAX_ITER,
        termination_reason=reason,
    )
