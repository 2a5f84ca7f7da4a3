"""Twin-pair Gaussian mixture likelihood.

Each observation is a pair ``(x1, x2)`` measured on the two members of a
same-sex twin pair.  Component ``k`` has mean ``mu_k + beta * male`` for both
twins, common standard deviation ``sigma_k``, and a within-pair correlation
that depends on zygosity (``rho_mz`` or ``rho_dz``).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .errors import DomainError, EmptyDataset
from .params import (NaturalParams, UnconstrainedParams, n_components_for, n_params,
                     natural_arrays)

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class TwinDataset:
    """Bivariate twin measurements with zygosity and sex labels.

    Attributes
    ----------
    x : ndarray, shape (n, 2)
    mz : ndarray of bool
        True for monozygotic pairs.
    male : ndarray of bool
        True for male pairs.
    """

    x: np.ndarray
    mz: np.ndarray
    male: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1, 2)
        mz = np.array(self.mz, dtype=bool).reshape(-1)
        male = np.array(self.male, dtype=bool).reshape(-1)
        if not (len(x) == len(mz) == len(male)):
            raise DomainError("x, mz and male must have the same number of rows")
        if not np.all(np.isfinite(x)):
            raise DomainError("observations must be finite")
        for a in (x, mz, male):
            a.setflags(write=False)
        male_float = male.astype(float)
        male_float.setflags(write=False)
        object.__setattr__(self, "male_float", male_float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "mz", mz)
        object.__setattr__(self, "male", male)

    def __len__(self) -> int:
        return len(self.x)

    @property
    def n_mz(self) -> int:
        return int(self.mz.sum())

    @property
    def n_dz(self) -> int:
        return len(self) - self.n_mz

    def subset(self, index) -> "TwinDataset":
        return TwinDataset(self.x[index], self.mz[index], self.male[index])

    def concat(self, other: "TwinDataset") -> "TwinDataset":
        return TwinDataset(np.vstack([self.x, other.x]), np.concatenate([self.mz, other.mz]),
                           np.concatenate([self.male, other.male]))

    def shifted(self, c: float) -> "TwinDataset":
        return TwinDataset(self.x + c, self.mz, self.male)


def write_csv(data: TwinDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "zygosity", "sex"])
        for (x1, x2), mz, male in zip(data.x, data.mz, data.male):
            w.writerow([repr(float(x1)), repr(float(x2)), "MZ" if mz else "DZ", "M" if male else "F"])


def read_csv(path) -> TwinDataset:
    path = Path(path)
    xs, mz, male = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) < {"x1", "x2", "zygosity", "sex"}:
            raise DomainError(f"{path}: expected header x1,x2,zygosity,sex")
        for lineno, row in enumerate(reader, start=2):
            zyg, sex = row["zygosity"].strip().upper(), row["sex"].strip().upper()
            if zyg not in ("MZ", "DZ") or sex not in ("F", "M"):
                raise DomainError(f"{path}:{lineno}: bad zygosity/sex {zyg!r}/{sex!r}")
            xs.append((float(row["x1"]), float(row["x2"])))
            mz.append(zyg == "MZ")
            male.append(sex == "M")
    return TwinDataset(np.array(xs).reshape(-1, 2), mz, male)


@dataclass(frozen=True)
class ModelSpec:
    n_components: int = 3

    def __post_init__(self):
        if self.n_components not in (1, 2, 3):
            raise DomainError("only 1, 2 or 3 components are supported")

    @property
    def n_params(self) -> int:
        return n_params(self.n_components)


@dataclass(frozen=True)
class NllResult:
    nll: float
    gradient: np.ndarray
    valid: bool


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------


def bivariate_normal_logpdf(x, mu, sigma: float, rho: float) -> float:
    """Log density of a bivariate normal with covariance ``sigma**2 [[1, rho], [rho, 1]]``."""
    if not sigma > 0 or not abs(rho) < 1:
        raise DomainError(f"need sigma > 0 and |rho| < 1, got sigma={sigma}, rho={rho}")
    z1 = (x[0] - mu[0]) / sigma
    z2 = (x[1] - mu[1]) / sigma
    omr2 = 1.0 - rho * rho
    q = z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2
    return -LOG_2PI - 2.0 * np.log(sigma) - 0.5 * np.log(omr2) - q / (2.0 * omr2)


@numba.njit(cache=True)
def _row_kernel(x, C, mz, mu, sigma, rho_mz, rho_dz, beta, log_p):
    """Per-row mixture log-likelihood accumulated in row order.

    Returns the total log-likelihood and its partial derivatives with respect
    to ``mu``, ``log sigma``, ``rho_mz``, ``rho_dz``, ``beta`` plus the summed
    responsibilities.
    """
    n = x.shape[0]
    m = mu.shape[0]
    # per (zygosity, component) constants; row 0 is DZ, row 1 is MZ
    rho = np.empty((2, m))
    inv_omr2 = np.empty((2, m))
    const = np.empty((2, m))
    mean_fac = np.empty((2, m))
    inv_sigma = 1.0 / sigma
    for k in range(m):
        rho[0, k] = rho_dz[k]
        rho[1, k] = rho_mz[k]
        for zi in range(2):
            r = rho[zi, k]
            omr2 = 1.0 - r * r
            inv_omr2[zi, k] = 1.0 / omr2
            const[zi, k] = log_p[k] - LOG_2PI - 2.0 * np.log(sigma[k]) - 0.5 * np.log(omr2)
            mean_fac[zi, k] = inv_sigma[k] / (1.0 + r)
    ll = 0.0
    g_mu = np.zeros(m)
    g_logs = np.zeros(m)
    g_rho = np.zeros((2, m))
    g_beta = 0.0
    w_sum = np.zeros(m)
    lc = np.empty(m)
    a_mean = np.empty(m)
    a_logs = np.empty(m)
    a_rho = np.empty(m)
    for i in range(n):
        zi = 1 if mz[i] else 0
        shift = beta * C[i]
        top = -np.inf
        for k in range(m):
            r = rho[zi, k]
            mean = mu[k] + shift
            z1 = (x[i, 0] - mean) * inv_sigma[k]
            z2 = (x[i, 1] - mean) * inv_sigma[k]
            z12 = z1 * z2
            q_over = (z1 * z1 + z2 * z2 - 2.0 * r * z12) * inv_omr2[zi, k]
            lc[k] = const[zi, k] - 0.5 * q_over
            a_mean[k] = (z1 + z2) * mean_fac[zi, k]
            a_logs[k] = q_over - 2.0
            a_rho[k] = (r + z12 - q_over * r) * inv_omr2[zi, k]
            if lc[k] > top:
                top = lc[k]
        tot = 0.0
        for k in range(m):
            lc[k] = np.exp(lc[k] - top)
            tot += lc[k]
        ll += top + np.log(tot)
        inv_tot = 1.0 / tot
        row_mean = 0.0
        for k in range(m):
            w = lc[k] * inv_tot
            w_sum[k] += w
            g_mu[k] += w * a_mean[k]
            row_mean += w * a_mean[k]
            g_logs[k] += w * a_logs[k]
            g_rho[zi, k] += w * a_rho[k]
        g_beta += C[i] * row_mean
    return ll, g_mu, g_logs, g_rho[1], g_rho[0], g_beta, w_sum


def _nll_grad(theta: np.ndarray, data: TwinDataset, m: int, want_grad: bool = True):
    """Negative log-likelihood and its gradient on the unconstrained scale.

    Returns ``(inf, zeros)`` wherever the parameters do not describe a valid
    mixture (|rho| >= 1, overflowing means, ...).
    """
    size = 5 * m
    bad = (np.inf, np.zeros(size))
    if not np.all(np.abs(theta[2 * m:4 * m]) < 1.0):
        return bad
    with np.errstate(over="ignore", under="ignore", divide="ignore"):
        mu, sigma, rho_mz, rho_dz, beta, p, exp_alpha = natural_arrays(theta, m)
        if not (np.all(np.isfinite(mu)) and np.all(sigma > 0) and np.all(np.isfinite(sigma))):
            return bad
        ll, g_mu, g_logs, g_rmz, g_rdz, g_beta, w_sum = _row_kernel(
            data.x, data.male_float, data.mz, mu, sigma, rho_mz, rho_dz, beta, np.log(p))
    if not np.isfinite(ll):
        return bad
    grad = np.empty(size)
    grad[:m] = -exp_alpha * np.cumsum(g_mu[::-1])[::-1]
    grad[m:2 * m] = -g_logs
    grad[2 * m:3 * m] = -g_rmz
    grad[3 * m:4 * m] = -g_rdz
    grad[4 * m] = -g_beta
    grad[4 * m + 1:] = -(w_sum[: m - 1] - len(data) * p[: m - 1])
    if not np.all(np.isfinite(grad)):
        return bad
    return -ll, grad


def _nll_grad_numpy(theta: np.ndarray, data: TwinDataset, m: int, want_grad: bool = True):
    """Vectorised reference for :func:`_nll_grad` (slower, same contract)."""
    size = 5 * m
    bad = (np.inf, np.zeros(size))
    rho_all = theta[2 * m:4 * m]
    if not np.all(np.abs(rho_all) < 1.0):
        return bad
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        mu, sigma, rho_mz, rho_dz, beta, p, exp_alpha = natural_arrays(theta, m)
        if not (np.all(np.isfinite(mu)) and np.all(sigma > 0) and np.all(np.isfinite(sigma))):
            return bad
        C = data.male.astype(float)
        mz = data.mz
        mean = mu[None, :] + (C * beta)[:, None]
        r = np.where(mz[:, None], rho_mz[None, :], rho_dz[None, :])
        omr2 = 1.0 - r * r
        z1 = (data.x[:, 0:1] - mean) / sigma
        z2 = (data.x[:, 1:2] - mean) / sigma
        z12 = z1 * z2
        q = z1 * z1 + z2 * z2 - 2.0 * r * z12
        q_over = q / omr2
        log_comp = (np.log(p) - LOG_2PI - 2.0 * np.log(sigma))[None, :] \
            - 0.5 * np.log(omr2) - 0.5 * q_over
        top = log_comp.max(axis=1, keepdims=True)
        e = np.exp(log_comp - top)
        tot = e.sum(axis=1, keepdims=True)
        row_ll = top[:, 0] + np.log(tot[:, 0])
        nll = -float(row_ll.sum())
        if not np.isfinite(nll):
            return bad
        if not want_grad:
            return nll, None

        w = e / tot
        d_mean = w * (z1 + z2) / (sigma * (1.0 + r))
        d_logs = w * (q_over - 2.0)
        d_rho = w * (r + z12 - q_over * r) / omr2

        g_mu = d_mean.sum(axis=0)
        grad = np.empty(size)
        # mu_k depends on alpha_j for every j <= k
        grad[:m] = -exp_alpha * np.cumsum(g_mu[::-1])[::-1]
        grad[m:2 * m] = -d_logs.sum(axis=0)
        grad[2 * m:3 * m] = -d_rho[mz].sum(axis=0)
        grad[3 * m:4 * m] = -d_rho[~mz].sum(axis=0)
        grad[4 * m] = -float(C @ d_mean.sum(axis=1))
        grad[4 * m + 1:] = -(w.sum(axis=0)[: m - 1] - len(data) * p[: m - 1])
    if not np.all(np.isfinite(grad)):
        return bad
    return nll, grad


def nll(u: UnconstrainedParams | np.ndarray, data: TwinDataset,
        spec: ModelSpec | None = None) -> NllResult:
    """Negative log-likelihood of ``data`` at ``u`` with its exact gradient."""
    theta = u.flat if isinstance(u, UnconstrainedParams) else np.asarray(u, dtype=float)
    m = n_components_for(theta.size)
    if spec is not None and spec.n_components != m:
        raise DomainError(f"parameter vector has {m} components but model expects {spec.n_components}")
    if len(data) == 0:
        raise EmptyDataset("cannot evaluate a likelihood on an empty dataset")
    value, grad = _nll_grad(theta, data, m)
    return NllResult(value, grad, bool(np.isfinite(value)))


def objective(data: TwinDataset, m: int):
    """``theta -> (nll, grad)`` closure used by the optimizer and sampler."""
    if len(data) == 0:
        raise EmptyDataset("cannot evaluate a likelihood on an empty dataset")

    def f(theta):
        return _nll_grad(np.asarray(theta, dtype=float), data, m)
    return f


def nll_value(theta: np.ndarray, data: TwinDataset) -> float:
    theta = np.asarray(theta, dtype=float)
    return _nll_grad(theta, data, n_components_for(theta.size), want_grad=False)[0]


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def _round(x: float) -> int:
    return int(np.floor(x + 0.5))


def layout_counts(n_total: int, frac_mz: float, frac_male: float) -> dict[tuple[str, str], int]:
    """Row counts per (zygosity, sex) cell, crossing the two factors proportionally."""
    if n_total <= 0:
        raise DomainError("n_total must be positive")
    if not (0 < frac_mz < 1 and 0 < frac_male < 1):
        raise DomainError("fractions must lie strictly between 0 and 1")
    n_mz = _round(n_total * frac_mz)
    n_dz = n_total - n_mz
    mz_m = _round(n_mz * frac_male)
    dz_m = _round(n_dz * frac_male)
    return {("MZ", "F"): n_mz - mz_m, ("MZ", "M"): mz_m, ("DZ", "F"): n_dz - dz_m, ("DZ", "M"): dz_m}


def simulate(params: NaturalParams, n_total: int = 1200, frac_mz: float = 1 / 3,
             frac_male: float = 0.5, seed: int = 0) -> TwinDataset:
    """Draw a twin dataset from the mixture; identical seeds give identical data."""
    params.validate(allow_empty=True)
    counts = layout_counts(n_total, frac_mz, frac_male)
    mz = np.concatenate([np.full(n, z == "MZ") for (z, _), n in counts.items()])
    male = np.concatenate([np.full(n, s == "M") for (_, s), n in counts.items()])
    rng = np.random.default_rng(seed)
    comp = rng.choice(params.n_components, size=n_total, p=params.p)
    mean = params.mu[comp] + params.beta * male
    sd = params.sigma[comp]
    rho = np.where(mz, params.rho_mz[comp], params.rho_dz[comp])
    e1 = rng.standard_normal(n_total)
    e2 = rng.standard_normal(n_total)
    x1 = mean + sd * e1
    x2 = mean + sd * (rho * e1 + np.sqrt(1.0 - rho * rho) * e2)
    return TwinDataset(np.column_stack([x1, x2]), mz, male)
