"""Box-constrained limited-memory quasi-Newton minimisation of the NLL.

The core routine :func:`minimize_function` works on any ``x -> (f, grad)``
objective.  It is a projected L-BFGS: variables sitting on a bound with the
gradient pushing outward are frozen for the iteration, the search direction
comes from the two-loop recursion restricted to the free variables, and the
line search runs along the projected path.  ``+inf`` objective values are
treated as failed trial points, never as errors.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import line_search

from .errors import DomainError, SingularHessian
from .model import ModelSpec, TwinDataset, objective
from .params import (BoxBounds, FixedMask, NaturalParams, UnconstrainedParams, apply_mask,
                     embed, natural_jacobian, optimizer_box, to_natural)

_ARMIJO = 1e-4
_MAX_BACKTRACK = 60
_BACKOFF_ATTEMPTS = 10


class Termination(str, enum.Enum):
    GRADIENT_TOL = "GradientTol"
    STEP_TOL = "StepTol"
    MAX_ITER = "MaxIter"
    INVALID_START = "InvalidStart"
    LINE_SEARCH_FAIL = "LineSearchFail"


@dataclass(frozen=True)
class OptimConfig:
    max_iterations: int = 500
    gradient_tolerance: float = 1e-8
    step_tolerance: float = 1e-10
    history_size: int = 10
    bounds: BoxBounds | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be at least 1")
        if self.gradient_tolerance <= 0 or self.step_tolerance <= 0:
            raise DomainError("tolerances must be positive")
        if self.history_size < 1:
            raise DomainError("history_size must be at least 1")

    def to_dict(self) -> dict:
        d = {"max_iterations": self.max_iterations, "gradient_tolerance": self.gradient_tolerance,
             "step_tolerance": self.step_tolerance, "history_size": self.history_size}
        d["bounds"] = None if self.bounds is None else self.bounds.to_dict()
        return d


@dataclass(frozen=True)
class MinimizeOutcome:
    """Result of :func:`minimize_function` on a bare objective."""

    x: np.ndarray
    f: float
    termination: Termination
    iterations: int
    n_evaluations: int
    history: list = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.termination in (Termination.GRADIENT_TOL, Termination.STEP_TOL)


@dataclass(frozen=True)
class OptimResult:
    argmin: UnconstrainedParams
    nll: float
    converged: bool
    iterations: int
    termination: Termination

    @property
    def natural(self) -> NaturalParams:
        return to_natural(self.argmin)

    def to_dict(self) -> dict:
        return {
            "nll": self.nll if np.isfinite(self.nll) else None,
            "converged": self.converged,
            "termination": self.termination.value,
            "iterations": self.iterations,
            "params_natural": self.natural.to_dict(),
            "params_unconstrained": self.argmin.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimResult":
        nll = np.inf if d["nll"] is None else float(d["nll"])
        return cls(UnconstrainedParams.from_dict(d["params_unconstrained"]), nll,
                   bool(d["converged"]), int(d["iterations"]), Termination(d["termination"]))


def projected_gradient(x, g, lower, upper) -> np.ndarray:
    return np.clip(x - g, lower, upper) - x


def _two_loop(g, s_hist, y_hist, free):
    q = np.where(free, g, 0.0)
    alphas = []
    rhos = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        sf, yf = s * free, y * free
        sy = sf @ yf
        if sy <= 1e-300:
            alphas.append(0.0)
            rhos.append(0.0)
            continue
        rho = 1.0 / sy
        a = rho * (sf @ q)
        q = q - a * yf
        alphas.append(a)
        rhos.append(rho)
    if s_hist:
        # diagonal initial inverse Hessian from the stored pairs; the usual
        # scalar scaling struggles on the NLL's 1e4-wide curvature spread
        S = np.array(s_hist) * free
        Y = np.array(y_hist) * free
        num = (S * Y).sum(axis=0)
        den = (Y * Y).sum(axis=0)
        sy, yy = S[-1] @ Y[-1], Y[-1] @ Y[-1]
        scalar = sy / yy if yy > 0 and sy > 0 else 1.0
        ok = (num > 0) & (den > 0)
        gamma = np.where(ok, num / np.where(ok, den, 1.0), scalar)
    else:
        # no curvature yet: first step of unit length at most
        gamma = 1.0 / max(1.0, float(np.sqrt(q @ q)))
    r = gamma * q
    for (s, y), a, rho in zip(zip(s_hist, y_hist), reversed(alphas), reversed(rhos)):
        if rho == 0.0:
            continue
        b = rho * ((y * free) @ r)
        r = r + (s * free) * (a - b)
    return -r


def _recover_start(fun, x0, lower, upper):
    """Geometric backoff toward the box center until the objective is finite."""
    center = BoxBounds(lower, upper).center()
    for k in range(1, _BACKOFF_ATTEMPTS + 1):
        x = np.clip(center + (x0 - center) * 0.5 ** k, lower, upper)
        f, g = fun(x)
        if np.isfinite(f):
            return x, f, g
    return None


def minimize_function(fun, x0, lower=None, upper=None, cfg: OptimConfig | None = None,
                      record: bool = False) -> MinimizeOutcome:
    """Minimise ``fun`` (returning ``(f, grad)``) over the box ``[lower, upper]``.

    Parameters
    ----------
    fun : callable
        Objective returning value and gradient; may return ``+inf``.
    x0 : array_like
        Starting point; projected onto the box first.
    record : bool
        Keep every evaluated point and accepted value in ``history``.
    """
    cfg = cfg or OptimConfig()
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    history = []
    n_eval = 0

    def evaluate(x):
        nonlocal n_eval
        n_eval += 1
        f, g = fun(x)
        if record:
            history.append(("eval", x.copy(), f))
        return f, g

    x = np.clip(x0, lower, upper)
    f, g = evaluate(x)
    if not np.isfinite(f):
        recovered = _recover_start(evaluate, x, lower, upper)
        if recovered is None:
            return MinimizeOutcome(x, np.inf, Termination.INVALID_START, 0, n_eval, history)
        x, f, g = recovered
    if record:
        history.append(("accept", x.copy(), f))

    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    eps = np.finfo(float).eps
    termination = Termination.MAX_ITER
    it = 0
    while it < cfg.max_iterations:
        pg = projected_gradient(x, g, lower, upper)
        if np.max(np.abs(pg)) <= cfg.gradient_tolerance:
            termination = Termination.GRADIENT_TOL
            break
        it += 1
        at_lower = (x <= lower) & (g > 0)
        at_upper = (x >= upper) & (g < 0)
        free = ~(at_lower | at_upper)
        d = _two_loop(g, s_hist, y_hist, free)
        slope = g @ d
        if not slope < 0:
            s_hist.clear()
            y_hist.clear()
            d = np.where(free, -g, 0.0)
            d /= max(1.0, float(np.sqrt(d @ d)))
            slope = g @ d

        x_new = f_new = g_new = None
        # largest step that keeps every coordinate inside the box
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            t_lo = np.where(d < 0, (lower - x) / d, np.inf)
            t_hi = np.where(d > 0, (upper - x) / d, np.inf)
        t_max = float(np.min(np.minimum(t_lo, t_hi)))
        if t_max >= 1.0:
            cache = {}

            def fval(z):
                key = z.tobytes()
                if key not in cache:
                    cache[key] = evaluate(z)
                return cache[key][0]

            def fgrad(z):
                key = z.tobytes()
                if key not in cache:
                    cache[key] = evaluate(z)
                return cache[key][1]

            with np.errstate(all="ignore"), warnings.catch_warnings():
                warnings.simplefilter("ignore")
                try:
                    ls = line_search(fval, fgrad, x, d, gfk=g, old_fval=f,
                                     c1=_ARMIJO, c2=0.9, amax=min(t_max, 1e10), maxiter=20)
                except Exception:  # noqa: BLE001 - any failure falls back to backtracking
                    ls = (None,)
            t = ls[0]
            if t is not None and t > 0:
                z = np.clip(x + t * d, lower, upper)
                fz, gz = cache.get(z.tobytes()) or evaluate(z)
                if np.isfinite(fz) and fz <= f + _ARMIJO * t * slope:
                    x_new, f_new, g_new = z, fz, gz

        if x_new is None:
            t = 1.0
            tiny_step = False
            for _ in range(_MAX_BACKTRACK):
                z = np.clip(x + t * d, lower, upper)
                step = z - x
                if np.max(np.abs(step)) <= cfg.step_tolerance * (1.0 + np.max(np.abs(x))):
                    tiny_step = True
                    break
                fz, gz = evaluate(z)
                if np.isfinite(fz) and fz <= f + _ARMIJO * (g @ step):
                    x_new, f_new, g_new = z, fz, gz
                    break
                t *= 0.5
            if x_new is None:
                # no decrease at this resolution: converged if the predicted
                # decrease is already down at rounding level
                predicted = abs(g @ (np.clip(x + t * d, lower, upper) - x))
                if tiny_step or predicted <= 1e3 * eps * max(1.0, abs(f)):
                    termination = Termination.STEP_TOL
                else:
                    termination = Termination.LINE_SEARCH_FAIL
                break

        s = x_new - x
        y = g_new - g
        x, f, g = x_new, f_new, g_new
        if record:
            history.append(("accept", x.copy(), f))
        if s @ y > 1e-10 * (y @ y):
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > cfg.history_size:
                s_hist.pop(0)
                y_hist.pop(0)
        if np.max(np.abs(s)) <= cfg.step_tolerance * (1.0 + np.max(np.abs(x))):
            termination = Termination.STEP_TOL
            break
    return MinimizeOutcome(x, float(f), termination, it, n_eval, history)


# ---------------------------------------------------------------------------
# Twin-model front end
# ---------------------------------------------------------------------------


def minimize(start: UnconstrainedParams | np.ndarray, data: TwinDataset, spec: ModelSpec,
             cfg: OptimConfig | None = None, mask: FixedMask | None = None) -> OptimResult:
    """Fit the twin mixture from ``start``; fixed coordinates of ``mask`` are held."""
    cfg = cfg or OptimConfig()
    theta0 = start.flat if isinstance(start, UnconstrainedParams) else np.asarray(start, dtype=float)
    if theta0.size != spec.n_params:
        raise DomainError(f"start has {theta0.size} entries, model needs {spec.n_params}")
    if not np.all(np.isfinite(theta0)):
        raise DomainError("start must be finite")
    bounds = cfg.bounds or optimizer_box(spec.n_components)
    full = objective(data, spec.n_components)
    if mask is None:
        fun, x0, lo, hi = full, theta0, bounds.lower, bounds.upper
    else:
        free = ~mask.fixed

        def fun(z):
            f, g = full(embed(z, mask))
            return f, g[free]
        x0 = apply_mask(theta0, mask)
        lo, hi = bounds.lower[free], bounds.upper[free]
    out = minimize_function(fun, x0, lo, hi, cfg)
    theta = out.x if mask is None else embed(out.x, mask)
    return OptimResult(UnconstrainedParams.from_flat(theta), out.f, out.converged,
                       out.iterations, out.termination)


def numerical_hessian(theta: np.ndarray, data: TwinDataset, rel_step: float = 1e-5) -> np.ndarray:
    """Central differences of the analytic gradient, symmetrised."""
    theta = np.asarray(theta, dtype=float)
    fun = objective(data, theta.size // 5)
    n = theta.size
    H = np.empty((n, n))
    for j in range(n):
        h = rel_step * max(1.0, abs(theta[j]))
        e = np.zeros(n)
        e[j] = h
        _, gp = fun(theta + e)
        _, gm = fun(theta - e)
        H[:, j] = (gp - gm) / (2.0 * h)
    return 0.5 * (H + H.T)


def standard_errors(at: UnconstrainedParams | np.ndarray, data: TwinDataset,
                    spec: ModelSpec | None = None) -> np.ndarray:
    """Delta-method standard errors of ``NaturalParams.flat`` at a fitted optimum.

    Raises :class:`SingularHessian` if the Hessian of the NLL is not
    numerically positive definite.
    """
    theta = at.flat if isinstance(at, UnconstrainedParams) else np.asarray(at, dtype=float)
    if spec is not None and spec.n_params != theta.size:
        raise DomainError("parameter vector does not match model")
    H = numerical_hessian(theta, data)
    if not np.all(np.isfinite(H)):
        raise SingularHessian("Hessian has non-finite entries")
    eig = np.linalg.eigvalsh(H)
    if eig[0] <= 1e-8 * max(abs(eig[-1]), 1.0):
        raise SingularHessian(f"Hessian is not positive definite (smallest eigenvalue {eig[0]:.3g})")
    cov = np.linalg.inv(H)
    J = natural_jacobian(theta)
    var = np.einsum("ij,jk,ik->i", J, cov, J)
    return np.sqrt(np.maximum(var, 0.0))
