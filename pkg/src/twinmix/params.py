"""Parameter spaces for the twin-pair Gaussian mixture.

Two coordinate systems are used throughout the package:

* the *unconstrained* vector that the sampler and optimizer move in,
  laid out as ``(alpha[m], log_sigma[m], rho_mz[m], rho_dz[m], beta, pre_p[m-1])``
  (length ``5 m``; 15 for the three-component model), and
* the *natural* parameters ``(mu, sigma, rho_mz, rho_dz, beta, p)``.

Means are kept ordered by building them as cumulative sums of exponentials,
and the weights come from a softmax with the last component as reference.
Correlations live on their natural scale in both systems.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit, log_expit

from .errors import DomainError, LengthMismatch

GROUPS = ("alpha", "log_sigma", "rho_mz", "rho_dz", "beta", "pre_p")
NATURAL_GROUPS = ("mu", "sigma", "rho_mz", "rho_dz", "beta", "p")


def n_params(m: int) -> int:
    """Length of the unconstrained vector for an ``m``-component model."""
    if m < 1:
        raise DomainError(f"need at least one component, got {m}")
    return 5 * m


def n_components_for(size: int) -> int:
    if size < 5 or size % 5:
        raise LengthMismatch(f"no mixture layout has {size} unconstrained parameters")
    return size // 5


def group_slices(m: int) -> dict[str, slice]:
    """Positions of each named group inside the flat unconstrained vector."""
    return {
        "alpha": slice(0, m),
        "log_sigma": slice(m, 2 * m),
        "rho_mz": slice(2 * m, 3 * m),
        "rho_dz": slice(3 * m, 4 * m),
        "beta": slice(4 * m, 4 * m + 1),
        "pre_p": slice(4 * m + 1, 5 * m),
    }


def param_names(m: int) -> list[str]:
    names = []
    for g in GROUPS:
        if g == "beta":
            names.append("beta")
        else:
            size = m - 1 if g == "pre_p" else m
            names.extend(f"{g}{k + 1}" for k in range(size))
    return names


def natural_names(m: int) -> list[str]:
    names = []
    for g in NATURAL_GROUPS:
        if g == "beta":
            names.append("beta")
        else:
            names.extend(f"{g}{k + 1}" for k in range(m))
    return names


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnconstrainedParams:
    alpha: np.ndarray
    log_sigma: np.ndarray
    rho_mz: np.ndarray
    rho_dz: np.ndarray
    beta: float
    pre_p: np.ndarray

    def __post_init__(self):
        m = len(np.atleast_1d(self.alpha))
        for name in ("alpha", "log_sigma", "rho_mz", "rho_dz"):
            arr = _frozen(np.atleast_1d(getattr(self, name)))
            if arr.shape != (m,):
                raise LengthMismatch(f"{name} must have length {m}")
            object.__setattr__(self, name, arr)
        pre_p = _frozen(np.atleast_1d(np.asarray(self.pre_p, dtype=float)).reshape(-1))
        if pre_p.shape != (m - 1,):
            raise LengthMismatch(f"pre_p must have length {m - 1}")
        object.__setattr__(self, "pre_p", pre_p)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n_components(self) -> int:
        return len(self.alpha)

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(
            [self.alpha, self.log_sigma, self.rho_mz, self.rho_dz, [self.beta], self.pre_p]
        )

    @classmethod
    def from_flat(cls, theta: Sequence[float]) -> "UnconstrainedParams":
        theta = np.asarray(theta, dtype=float)
        m = n_components_for(theta.size)
        s = group_slices(m)
        return cls(theta[s["alpha"]], theta[s["log_sigma"]], theta[s["rho_mz"]],
                   theta[s["rho_dz"]], theta[s["beta"]][0], theta[s["pre_p"]])

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha.tolist(),
            "log_sigma": self.log_sigma.tolist(),
            "rho_mz": self.rho_mz.tolist(),
            "rho_dz": self.rho_dz.tolist(),
            "beta": self.beta,
            "pre_p": self.pre_p.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UnconstrainedParams":
        return cls(d["alpha"], d["log_sigma"], d["rho_mz"], d["rho_dz"], d["beta"], d["pre_p"])


@dataclass(frozen=True)
class NaturalParams:
    """Interpretable mixture parameters (female baseline means)."""

    mu: np.ndarray
    sigma: np.ndarray
    rho_mz: np.ndarray
    rho_dz: np.ndarray
    beta: float
    p: np.ndarray

    def __post_init__(self):
        m = len(np.atleast_1d(self.mu))
        for name in ("mu", "sigma", "rho_mz", "rho_dz", "p"):
            arr = _frozen(np.atleast_1d(getattr(self, name)))
            if arr.shape != (m,):
                raise LengthMismatch(f"{name} must have length {m}")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n_components(self) -> int:
        return len(self.mu)

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(
            [self.mu, self.sigma, self.rho_mz, self.rho_dz, [self.beta], self.p]
        )

    @classmethod
    def from_flat(cls, values: Sequence[float]) -> "NaturalParams":
        values = np.asarray(values, dtype=float)
        if values.size < 6 or (values.size - 1) % 5:
            raise LengthMismatch(f"no natural layout has {values.size} entries")
        m = (values.size - 1) // 5
        return cls(values[:m], values[m:2 * m], values[2 * m:3 * m], values[3 * m:4 * m],
                   values[4 * m], values[4 * m + 1:])

    def validate(self, strict_order: bool = False, allow_empty: bool = False) -> "NaturalParams":
        """Raise :class:`DomainError` unless the parameters describe a valid mixture.

        ``allow_empty`` admits zero weights (degenerate mixtures used for simulation).
        """
        flat = self.flat
        if not np.all(np.isfinite(flat)):
            raise DomainError("natural parameters must be finite")
        gaps = np.diff(self.mu)
        if self.mu[0] <= 0:
            raise DomainError("mu1 must be positive")
        if np.any(gaps < 0) or (strict_order and np.any(gaps <= 0)):
            raise DomainError(f"means must be increasing, got {self.mu}")
        if np.any(self.sigma <= 0):
            raise DomainError("standard deviations must be positive")
        if np.any(np.abs(self.rho_mz) >= 1) or np.any(np.abs(self.rho_dz) >= 1):
            raise DomainError("correlations must lie in (-1, 1)")
        bad_weight = np.any(self.p < 0) if allow_empty else np.any(self.p <= 0)
        if bad_weight or abs(self.p.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights must be positive and sum to one, got {self.p}")
        return self

    def to_dict(self) -> dict:
        return {
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "rho_mz": self.rho_mz.tolist(),
            "rho_dz": self.rho_dz.tolist(),
            "beta": self.beta,
            "p": self.p.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NaturalParams":
        return cls(d["mu"], d["sigma"], d["rho_mz"], d["rho_dz"], d["beta"], d["p"])


#: Generating values of the simulated twin dataset.
SIMULATION_TRUTH = NaturalParams(
    mu=[21.0, 23.0, 28.0],
    sigma=[1.0, 1.0, 1.0],
    rho_mz=[0.7, 0.5, 0.3],
    rho_dz=[0.4, 0.3, -0.2],
    beta=2.0,
    p=[0.6, 0.3, 0.1],
)


# ---------------------------------------------------------------------------
# The bijection
# ---------------------------------------------------------------------------


def weights_from_generators(t: np.ndarray) -> np.ndarray:
    """Softmax with an implicit zero generator for the last component."""
    z = np.append(np.asarray(t, dtype=float), 0.0)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def natural_arrays(theta: np.ndarray, m: int):
    """Fast path of :func:`to_natural` on a flat vector.

    Returns ``(mu, sigma, rho_mz, rho_dz, beta, p, exp_alpha)``.
    """
    exp_alpha = np.exp(theta[:m])
    mu = np.cumsum(exp_alpha)
    sigma = np.exp(theta[m:2 * m])
    return (mu, sigma, theta[2 * m:3 * m], theta[3 * m:4 * m], theta[4 * m],
            weights_from_generators(theta[4 * m + 1:5 * m]), exp_alpha)


def to_natural(u: UnconstrainedParams | np.ndarray) -> NaturalParams:
    theta = u.flat if isinstance(u, UnconstrainedParams) else np.asarray(u, dtype=float)
    m = n_components_for(theta.size)
    with np.errstate(over="ignore"):
        mu, sigma, rho_mz, rho_dz, beta, p, _ = natural_arrays(theta, m)
    return NaturalParams(mu, sigma, rho_mz, rho_dz, beta, p)


def from_natural(n: NaturalParams) -> UnconstrainedParams:
    n.validate(strict_order=True)
    alpha = np.log(np.concatenate([[n.mu[0]], np.diff(n.mu)]))
    log_p = np.log(n.p)
    return UnconstrainedParams(alpha, np.log(n.sigma), n.rho_mz, n.rho_dz, n.beta,
                               log_p[:-1] - log_p[-1])


def natural_jacobian(theta: np.ndarray) -> np.ndarray:
    """Jacobian of ``NaturalParams.flat`` with respect to the unconstrained vector.

    Shape ``(5 m + 1, 5 m)``.
    """
    theta = np.asarray(theta, dtype=float)
    m = n_components_for(theta.size)
    mu, sigma, _, _, _, p, exp_alpha = natural_arrays(theta, m)
    J = np.zeros((5 * m + 1, 5 * m))
    # mu_k = sum_{j <= k} exp(alpha_j)
    J[:m, :m] = np.tril(np.ones((m, m))) * exp_alpha[None, :]
    J[m:2 * m, m:2 * m] = np.diag(sigma)
    J[2 * m:4 * m, 2 * m:4 * m] = np.eye(2 * m)
    J[4 * m, 4 * m] = 1.0
    # dp_k / dt_j = p_k (delta_kj - p_j), j < m
    dp = np.diag(p) - np.outer(p, p)
    J[4 * m + 1:, 4 * m + 1:] = dp[:, : m - 1]
    return J


# ---------------------------------------------------------------------------
# Fixing masks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedMask:
    """Which unconstrained coordinates are held fixed, and at what values.

    ``values`` is a full-length vector; only its entries at fixed positions
    are meaningful.
    """

    fixed: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        fixed = np.asarray(self.fixed, dtype=bool).copy()
        values = np.asarray(self.values, dtype=float).copy()
        if fixed.shape != values.shape or fixed.ndim != 1:
            raise LengthMismatch("mask and values must be 1-D and of equal length")
        if fixed.all():
            raise DomainError("a mask must leave at least one coordinate free")
        values[~fixed] = 0.0
        fixed.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "fixed", fixed)
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.fixed.size

    @property
    def n_free(self) -> int:
        return int((~self.fixed).sum())

    @classmethod
    def none(cls, size: int) -> "FixedMask":
        return cls(np.zeros(size, dtype=bool), np.zeros(size))

    @classmethod
    def from_groups(cls, at: UnconstrainedParams | np.ndarray,
                    groups: Iterable[str | tuple[str, Sequence[int]]]) -> "FixedMask":
        """Fix whole groups (``"alpha"``) or selected elements (``("alpha", [0, 1])``)."""
        theta = at.flat if isinstance(at, UnconstrainedParams) else np.asarray(at, dtype=float)
        m = n_components_for(theta.size)
        slices = group_slices(m)
        fixed = np.zeros(theta.size, dtype=bool)
        for g in groups:
            name, idx = (g, None) if isinstance(g, str) else g
            if name not in slices:
                raise DomainError(f"unknown parameter group {name!r}")
            positions = np.arange(theta.size)[slices[name]]
            fixed[positions if idx is None else positions[list(idx)]] = True
        return cls(fixed, theta)

    def to_dict(self) -> dict:
        return {"fixed": self.fixed.tolist(),
                "values_at_fixed": [float(v) if f else None for f, v in zip(self.fixed, self.values)]}

    @classmethod
    def from_dict(cls, d: dict) -> "FixedMask":
        vals = [0.0 if v is None else v for v in d["values_at_fixed"]]
        return cls(d["fixed"], vals)


def apply_mask(full: UnconstrainedParams | np.ndarray, m: FixedMask) -> np.ndarray:
    theta = full.flat if isinstance(full, UnconstrainedParams) else np.asarray(full, dtype=float)
    if theta.size != m.size:
        raise LengthMismatch(f"vector of length {theta.size} vs mask of length {m.size}")
    return theta[~m.fixed].copy()


def embed(free: np.ndarray, m: FixedMask) -> np.ndarray:
    free = np.asarray(free, dtype=float)
    if free.shape != (m.n_free,):
        raise LengthMismatch(f"expected {m.n_free} free values, got {free.shape}")
    theta = m.values.copy()
    theta[~m.fixed] = free
    return theta


# ---------------------------------------------------------------------------
# Box bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxBounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).copy()
        upper = np.asarray(self.upper, dtype=float).copy()
        if lower.shape != upper.shape or lower.ndim != 1:
            raise LengthMismatch("lower and upper must be 1-D and of equal length")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise DomainError("bounds must not be NaN")
        if np.any(lower >= upper):
            raise DomainError("every lower bound must be below its upper bound")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def size(self) -> int:
        return self.lower.size

    @classmethod
    def unbounded(cls, size: int) -> "BoxBounds":
        return cls(np.full(size, -np.inf), np.full(size, np.inf))

    def restrict(self, mask: FixedMask | None) -> "BoxBounds":
        if mask is None:
            return self
        return BoxBounds(self.lower[~mask.fixed], self.upper[~mask.fixed])

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def center(self) -> np.ndarray:
        """Box midpoint; zero on a side that is unbounded."""
        lo = np.where(np.isfinite(self.lower), self.lower, np.nan)
        hi = np.where(np.isfinite(self.upper), self.upper, np.nan)
        mid = 0.5 * (lo + hi)
        mid = np.where(np.isnan(mid), np.where(np.isfinite(lo), np.maximum(lo, 0.0),
                                               np.where(np.isfinite(hi), np.minimum(hi, 0.0), 0.0)),
                       mid)
        return mid

    def to_dict(self) -> dict:
        def enc(a):
            return [float(v) if np.isfinite(v) else None for v in a]
        return {"lower": enc(self.lower), "upper": enc(self.upper)}

    @classmethod
    def from_dict(cls, d: dict) -> "BoxBounds":
        lower = [-np.inf if v is None else v for v in d["lower"]]
        upper = [np.inf if v is None else v for v in d["upper"]]
        return cls(lower, upper)


_SAMPLER_BOX = {"alpha": (-5.0, 5.0), "log_sigma": (-5.0, 5.0), "rho_mz": (-1.0, 1.0),
                "rho_dz": (-1.0, 1.0), "beta": (-5.0, 5.0), "pre_p": (-5.0, 5.0)}


def sampler_box(m: int = 3, groups: Iterable[str] = GROUPS) -> BoxBounds:
    """The sampling box: +-5 on every coordinate except correlations, which get +-1.

    ``groups`` limits the box to some parameter groups; the rest stay unbounded.
    """
    size = n_params(m)
    lower = np.full(size, -np.inf)
    upper = np.full(size, np.inf)
    slices = group_slices(m)
    for g in groups:
        lower[slices[g]], upper[slices[g]] = _SAMPLER_BOX[g]
    return BoxBounds(lower, upper)


def optimizer_box(m: int = 3, width: float = 10.0) -> BoxBounds:
    """Default optimizer box: the sampling box with non-correlation sides widened to +-width."""
    box = sampler_box(m)
    rho = np.zeros(box.size, dtype=bool)
    s = group_slices(m)
    rho[s["rho_mz"]] = rho[s["rho_dz"]] = True
    return BoxBounds(np.where(rho, box.lower, -width), np.where(rho, box.upper, width))


# ---------------------------------------------------------------------------
# Bound transform (sampler side)
# ---------------------------------------------------------------------------


def _kinds(bounds: BoxBounds):
    lo_f = np.isfinite(bounds.lower)
    hi_f = np.isfinite(bounds.upper)
    return lo_f & hi_f, lo_f & ~hi_f, ~lo_f & hi_f


def bound_transform(free: np.ndarray, bounds: BoxBounds) -> tuple[np.ndarray, float]:
    """Map real coordinates into the box, returning ``(constrained, log_jacobian)``.

    Doubly bounded coordinates use a scaled logistic, one-sided ones a shifted
    exponential, and unbounded ones pass through.
    """
    c, log_jac, _, _ = bound_transform_full(free, bounds)
    return c, log_jac


def bound_transform_full(free: np.ndarray, bounds: BoxBounds):
    """As :func:`bound_transform` plus ``d constrained / d free`` and ``d log_jac / d free``."""
    y = np.asarray(free, dtype=float)
    if y.shape != bounds.lower.shape:
        raise LengthMismatch("free vector and bounds differ in length")
    both, lo_only, hi_only = _kinds(bounds)
    c = y.copy()
    dc = np.ones_like(y)
    dlj = np.zeros_like(y)
    log_jac = 0.0
    if both.any():
        lo, hi, yb = bounds.lower[both], bounds.upper[both], y[both]
        s = expit(yb)
        width = hi - lo
        c[both] = np.minimum(lo + width * s, hi)
        dc[both] = width * s * (1.0 - s)
        log_jac += float(np.sum(np.log(width) + log_expit(yb) + log_expit(-yb)))
        dlj[both] = 1.0 - 2.0 * s
    if lo_only.any():
        e = np.exp(y[lo_only])
        c[lo_only] = bounds.lower[lo_only] + e
        dc[lo_only] = e
        log_jac += float(np.sum(y[lo_only]))
        dlj[lo_only] = 1.0
    if hi_only.any():
        e = np.exp(y[hi_only])
        c[hi_only] = bounds.upper[hi_only] - e
        dc[hi_only] = -e
        log_jac += float(np.sum(y[hi_only]))
        dlj[hi_only] = 1.0
    return c, log_jac, dc, dlj


def inverse_bound_transform(constrained: np.ndarray, bounds: BoxBounds) -> np.ndarray:
    """Inverse of :func:`bound_transform`; the point must lie strictly inside the box."""
    x = np.asarray(constrained, dtype=float)
    if np.any(x <= bounds.lower) or np.any(x >= bounds.upper):
        raise DomainError("point is not strictly inside the box")
    both, lo_only, hi_only = _kinds(bounds)
    y = x.copy()
    if both.any():
        u = (x[both] - bounds.lower[both]) / (bounds.upper[both] - bounds.lower[both])
        y[both] = np.log(u) - np.log1p(-u)
    y[lo_only] = np.log(x[lo_only] - bounds.lower[lo_only])
    y[hi_only] = np.log(bounds.upper[hi_only] - x[hi_only])
    return y
