"""Chain and model diagnostics.

Geweke Z-scores, moments of the overall (global) mixture distribution,
information criteria and per-parameter chain summaries.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ChainTooShort, DomainError, ZeroVariance
from .nuts import Chain
from .params import NaturalParams, natural_names, param_names

GEWEKE_CRITERION = 1.28


def spectral_density_at_zero(x: np.ndarray) -> float:
    """Bartlett-windowed autocovariance sum with lag window ``4 n^(1/3)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    max_lag = min(int(math.floor(4.0 * n ** (1.0 / 3.0))), n - 1)
    # autocovariances up to max_lag via FFT
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1] / n
    lags = np.arange(1, max_lag + 1)
    weights = 1.0 - lags / (max_lag + 1.0)
    return float(acov[0] + 2.0 * np.sum(weights * acov[1:]))


def geweke(column, frac_a: float = 0.1, frac_b: float = 0.5) -> float:
    """Geweke Z comparing the first ``frac_a`` and last ``frac_b`` of a chain."""
    x = np.asarray(column, dtype=float)
    if not (0 < frac_a and 0 < frac_b and frac_a + frac_b <= 1):
        raise DomainError("need positive fractions with frac_a + frac_b <= 1")
    if x.size < 100:
        raise ChainTooShort(f"need at least 100 draws, got {x.size}")
    n_a = int(frac_a * x.size)
    n_b = int(frac_b * x.size)
    a, b = x[:n_a], x[x.size - n_b:]
    if np.ptp(a) == 0 and np.ptp(b) == 0:
        raise ZeroVariance("column is constant in both windows")
    var = spectral_density_at_zero(a) / n_a + spectral_density_at_zero(b) / n_b
    if not var > 0:
        raise ZeroVariance("spectral variance estimate is not positive")
    return float((a.mean() - b.mean()) / math.sqrt(var))


@dataclass(frozen=True)
class GewekeResult:
    z_scores: np.ndarray
    frac_a: float = 0.1
    frac_b: float = 0.5

    @property
    def passed(self) -> np.ndarray:
        """``|Z| <= 1.28``; constant (fixed) columns count as passing."""
        z = self.z_scores
        return np.where(np.isnan(z), True, np.abs(z) <= GEWEKE_CRITERION)

    def to_dict(self, names=None) -> dict:
        names = names or [f"p{i}" for i in range(len(self.z_scores))]
        return {"frac_a": self.frac_a, "frac_b": self.frac_b, "criterion": GEWEKE_CRITERION,
                "scores": [{"parameter": n, "z": None if np.isnan(z) else float(z), "pass": bool(p)}
                           for n, z, p in zip(names, self.z_scores, self.passed)]}


def geweke_chain(chain: Chain, frac_a: float = 0.1, frac_b: float = 0.5) -> GewekeResult:
    """Z-scores for every unconstrained coordinate of a chain (NaN where constant)."""
    z = np.full(chain.draws.shape[1], np.nan)
    for j in range(chain.draws.shape[1]):
        try:
            z[j] = geweke(chain.draws[:, j], frac_a, frac_b)
        except ZeroVariance:
            pass
    return GewekeResult(z, frac_a, frac_b)


@dataclass(frozen=True)
class GlobalQuantities:
    mu_g: float
    sigma_g: float
    rho_mz_g: float
    rho_dz_g: float

    def as_tuple(self):
        return (self.mu_g, self.sigma_g, self.rho_mz_g, self.rho_dz_g)

    def to_dict(self) -> dict:
        return {"mu": self.mu_g, "sigma": self.sigma_g, "rho_mz": self.rho_mz_g,
                "rho_dz": self.rho_dz_g}


def _global_arrays(mu, sigma, rho_mz, rho_dz, p):
    mu_g = np.sum(p * mu, axis=-1)
    second = np.sum(p * mu * mu, axis=-1)
    var = np.sum(p * sigma ** 2, axis=-1) + second - mu_g ** 2
    cov_mz = np.sum(p * rho_mz * sigma ** 2, axis=-1) + second - mu_g ** 2
    cov_dz = np.sum(p * rho_dz * sigma ** 2, axis=-1) + second - mu_g ** 2
    return mu_g, np.sqrt(var), cov_mz / var, cov_dz / var


def global_quantities(n: NaturalParams) -> GlobalQuantities:
    """Mean, SD and within-pair correlations of the whole mixture (female baseline)."""
    n.validate(allow_empty=True)
    vals = _global_arrays(n.mu, n.sigma, n.rho_mz, n.rho_dz, n.p)
    return GlobalQuantities(*(float(v) for v in vals))


def chain_global_quantities(chain: Chain, method: str = "per_draw") -> GlobalQuantities:
    """Global quantities of a chain.

    ``per_draw`` averages the quantities computed draw by draw;
    ``mean_params`` applies the formula to the per-parameter means.
    """
    nat = chain.natural_draws()
    m = chain.n_components
    parts = (nat[:, :m], nat[:, m:2 * m], nat[:, 2 * m:3 * m], nat[:, 3 * m:4 * m],
             nat[:, 4 * m + 1:])
    if method == "per_draw":
        with np.errstate(all="ignore"):
            vals = _global_arrays(*parts)
        return GlobalQuantities(*(float(np.mean(v)) for v in vals))
    if method == "mean_params":
        mean = [np.mean(a, axis=0) for a in parts]
        mean[-1] = mean[-1] / mean[-1].sum()
        return GlobalQuantities(*(float(v) for v in _global_arrays(*mean)))
    raise DomainError(f"unknown method {method!r}")


def n_free_params(m: int) -> int:
    """Free parameters of an ``m``-component twin mixture: four per component,
    ``m - 1`` weight generators and the sex offset."""
    return 4 * m + (m - 1) + 1


def aic_bic(nll: float, k: int, n_obs: int) -> tuple[float, float]:
    if n_obs < 1 or k < 1:
        raise DomainError("need k >= 1 and n_obs >= 1")
    return 2.0 * k + 2.0 * nll, k * math.log(n_obs) + 2.0 * nll


@dataclass(frozen=True)
class ParamSummary:
    name: str
    mean: float
    sd: float


def summarize(chain: Chain) -> list[ParamSummary]:
    """Natural-scale mean and sample SD of every parameter over the chain."""
    if len(chain) == 0:
        raise DomainError("empty chain")
    nat = chain.natural_draws()
    out = []
    for name, col in zip(natural_names(chain.n_components), nat.T):
        if np.ptp(col) == 0:
            mean, sd = float(col[0]), 0.0
        else:
            with np.errstate(over="ignore", invalid="ignore"):
                mean = float(np.mean(col))
                sd = float(np.std(col, ddof=1)) if col.size > 1 else 0.0
        out.append(ParamSummary(name, mean, sd))
    return out


def diagnostics_report(chain: Chain, n_obs: int | None = None) -> dict:
    """JSON-ready bundle: Geweke scores, global quantities, AIC/BIC of the best draw, summary."""
    m = chain.n_components
    gq = chain_global_quantities(chain)
    report = {
        "geweke": geweke_chain(chain).to_dict(param_names(m)) if len(chain) >= 100 else None,
        "global": gq.to_dict(),
        "global_mean_params": chain_global_quantities(chain, "mean_params").to_dict(),
        "min_nll": chain.min_nll(),
        "summary": [{"parameter": s.name, "mean": s.mean, "sd": s.sd} for s in summarize(chain)],
        "divergent": int(np.sum(chain.divergences)),
        "mean_accept_stat": float(np.mean(chain.accept_stat)),
        "step_size": chain.step_size_final,
    }
    if n_obs is not None:
        report["aic"], report["bic"] = aic_bic(chain.min_nll(), n_free_params(m), n_obs)
    return report


def write_summary_csv(chain: Chain, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter", "mean", "sd"])
        for s in summarize(chain):
            w.writerow([s.name, f"{s.mean:.6g}", f"{s.sd:.6g}"])
