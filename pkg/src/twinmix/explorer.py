"""Sampling strategies and optimizer restarts from every draw.

The workflow is: run a sampling strategy to get a chain that covers the
high-likelihood region, restart the quasi-Newton optimizer from each retained
draw, and group the converged optima.  More than one group means the
likelihood has more than one local optimum reachable from that region.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, StuckChain
from .model import ModelSpec, TwinDataset
from .nuts import Chain, SamplerConfig, sample
from .optimizer import OptimConfig, OptimResult, Termination, minimize, minimize_function
from .params import (BoxBounds, FixedMask, NaturalParams, UnconstrainedParams, from_natural,
                     natural_names, optimizer_box, to_natural)

log = logging.getLogger(__name__)

PARAM_TOL = 1e-4
NLL_TOL = 1e-6


@dataclass(frozen=True)
class Strategy:
    """One of ``base``, ``seedloop``, ``fixed`` or ``bounded``."""

    kind: str = "base"
    n_seeds: int = 15
    mask: FixedMask | None = None
    bounds: BoxBounds | None = None

    def __post_init__(self):
        if self.kind not in ("base", "seedloop", "fixed", "bounded"):
            raise DomainError(f"unknown strategy {self.kind!r}")
        if self.kind == "fixed" and self.mask is None:
            raise DomainError("the fixed strategy needs a mask")
        if self.kind == "bounded" and self.bounds is None:
            raise DomainError("the bounded strategy needs bounds")
        if self.kind == "seedloop" and self.n_seeds < 1:
            raise DomainError("n_seeds must be at least 1")

    @classmethod
    def base(cls) -> "Strategy":
        return cls("base")

    @classmethod
    def seed_loop(cls, n_seeds: int = 15) -> "Strategy":
        return cls("seedloop", n_seeds=n_seeds)

    @classmethod
    def fixed_subset(cls, mask: FixedMask) -> "Strategy":
        return cls("fixed", mask=mask)

    @classmethod
    def bounded(cls, bounds: BoxBounds) -> "Strategy":
        return cls("bounded", bounds=bounds)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "seedloop":
            d["n_seeds"] = self.n_seeds
        if self.mask is not None:
            d["mask"] = self.mask.to_dict()
        if self.bounds is not None:
            d["bounds"] = self.bounds.to_dict()
        return d


def _sample_job(args):
    start, data, spec, cfg = args
    try:
        return sample(start, data, spec, cfg)
    except StuckChain as exc:
        return exc


def run_strategy(s: Strategy, start: UnconstrainedParams | np.ndarray, data: TwinDataset,
                 spec: ModelSpec, sampler_cfg: SamplerConfig | None = None,
                 threads: int = 1) -> Chain:
    """Sample under strategy ``s``; the seed loop returns its lowest-NLL chain.

    Seed-loop chains use seeds ``cfg.seed + i``.  A stuck chain inside the loop
    is logged and skipped; the loop fails only if every seed gets stuck.
    """
    cfg = sampler_cfg or SamplerConfig()
    cfg = replace(cfg, mask=s.mask, bounds=s.bounds)
    if s.kind != "seedloop":
        try:
            chain = sample(start, data, spec, cfg)
        except StuckChain as exc:
            raise StuckChain(f"strategy {s.kind}: {exc}") from exc
        chain.meta["strategy"] = s.kind
        return chain

    jobs = [(start, data, spec, replace(cfg, seed=cfg.seed + i)) for i in range(s.n_seeds)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_sample_job, jobs))
    else:
        outcomes = [_sample_job(j) for j in jobs]
    best, per_seed = None, []
    for (_, _, _, c), out in zip(jobs, outcomes):
        if isinstance(out, StuckChain):
            log.warning("seed %d: %s", c.seed, out)
            per_seed.append({"seed": c.seed, "min_nll": None, "stuck": True})
            continue
        per_seed.append({"seed": c.seed, "min_nll": out.min_nll(), "stuck": False})
        if best is None or out.min_nll() < best.min_nll():
            best = out
    if best is None:
        raise StuckChain(f"strategy seedloop: all {s.n_seeds} chains got stuck")
    best.meta["strategy"] = "seedloop"
    best.meta["per_seed"] = per_seed
    return best


# ---------------------------------------------------------------------------
# Restarts and clustering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimumCluster:
    representative: np.ndarray
    nll: float
    count: int
    members: tuple = ()

    def natural(self) -> NaturalParams:
        return NaturalParams.from_flat(self.representative)


def cluster_optima(points: np.ndarray, values: Sequence[float], indices: Sequence[int] | None = None,
                   param_tol: float = PARAM_TOL, nll_tol: float = NLL_TOL) -> list[OptimumCluster]:
    """Group optima that agree within ``param_tol`` (max-abs) and ``nll_tol``.

    Points are visited in order of objective value (ties broken by coordinates),
    so the result does not depend on the order of the input.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return []
    indices = np.arange(len(values)) if indices is None else np.asarray(indices)
    order = np.lexsort(tuple(points.T[::-1]) + (values,))
    reps: list[int] = []
    members: list[list[int]] = []
    for i in order:
        for c, r in enumerate(reps):
            if (np.max(np.abs(points[i] - points[r])) < param_tol
                    and abs(values[i] - values[r]) < nll_tol):
                members[c].append(int(indices[i]))
                break
        else:
            reps.append(i)
            members.append([int(indices[i])])
    return [OptimumCluster(points[r].copy(), float(values[r]), len(mem), tuple(sorted(mem)))
            for r, mem in zip(reps, members)]


@dataclass
class RestartRecord:
    start_index: int
    result: OptimResult


@dataclass
class ExplorationReport:
    per_restart: list
    best: OptimResult | None
    optima_clusters: list
    min_nll_by_strategy: float
    n_converged: int
    n_failed: int
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "best": None if self.best is None else self.best.to_dict(),
            "min_nll_by_strategy": _num(self.min_nll_by_strategy),
            "n_converged": self.n_converged,
            "n_failed": self.n_failed,
            "optima_clusters": [
                {"representative": c.natural().to_dict(), "nll": c.nll, "count": c.count}
                for c in self.optima_clusters
            ],
            "per_restart": [{"start_index": r.start_index, **r.result.to_dict()}
                            for r in self.per_restart],
            "meta": self.meta,
        }

    def write_restarts_csv(self, path) -> None:
        if not self.per_restart:
            m = 3
        else:
            m = self.per_restart[0].result.argmin.n_components
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["start_index", "converged", "termination", "nll", *natural_names(m)])
            for r in self.per_restart:
                res = r.result
                w.writerow([r.start_index, int(res.converged), res.termination.value,
                            repr(float(res.nll)), *(repr(float(v)) for v in res.natural.flat)])


def _num(x):
    return float(x) if np.isfinite(x) else None


def _minimize_job(args):
    start, data, spec, cfg = args
    if not np.all(np.isfinite(start.flat)):
        return OptimResult(start, np.inf, False, 0, Termination.INVALID_START)
    return minimize(start, data, spec, cfg)


def restart_all(chain: Chain, data: TwinDataset, spec: ModelSpec,
                optim_cfg: OptimConfig | None = None, threads: int = 1,
                param_tol: float = PARAM_TOL, nll_tol: float = NLL_TOL) -> ExplorationReport:
    """Run the optimizer from every retained draw and cluster the optima."""
    if len(chain) == 0:
        raise DomainError("chain has no draws")
    cfg = optim_cfg or OptimConfig(bounds=optimizer_box(spec.n_components))
    jobs = [(UnconstrainedParams.from_flat(d), data, spec, cfg) for d in chain.draws]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_minimize_job, jobs, chunksize=8))
    else:
        results = [_minimize_job(j) for j in jobs]
    records = [RestartRecord(i, r) for i, r in enumerate(results)]
    return assemble_report(records, chain.min_nll(), param_tol, nll_tol)


def assemble_report(records: list, min_nll_sampled: float, param_tol: float = PARAM_TOL,
                    nll_tol: float = NLL_TOL) -> ExplorationReport:
    records = sorted(records, key=lambda r: r.start_index)
    conv = [r for r in records if r.result.converged]
    if conv:
        pts = np.array([r.result.natural.flat for r in conv])
        vals = np.array([r.result.nll for r in conv])
        clusters = cluster_optima(pts, vals, [r.start_index for r in conv], param_tol, nll_tol)
        best = min(conv, key=lambda r: (r.result.nll, r.start_index)).result
    else:
        clusters, best = [], None
    return ExplorationReport(records, best, clusters, min_nll_sampled, len(conv),
                             len(records) - len(conv))


# ---------------------------------------------------------------------------
# Direct fits
# ---------------------------------------------------------------------------


def moment_start(data: TwinDataset, m: int) -> UnconstrainedParams:
    """Data-driven starting point: split pairs into ``m`` equal groups by pair mean."""
    male = data.male
    beta = float(data.x[male].mean() - data.x[~male].mean()) if male.any() and (~male).any() else 0.0
    adj = data.x - beta * male[:, None]
    order = np.argsort(adj.mean(axis=1), kind="stable")
    groups = np.array_split(order, m)
    mu, sigma, rmz, rdz = [], [], [], []
    for g in groups:
        xg = adj[g]
        mu.append(xg.mean())
        sigma.append(max(xg.std(), 1e-2))
        for zyg, out in ((data.mz[g], rmz), (~data.mz[g], rdz)):
            sub = xg[zyg]
            r = np.corrcoef(sub.T)[0, 1] if len(sub) > 2 else 0.0
            out.append(float(np.clip(np.nan_to_num(r), -0.9, 0.9)))
    mu = np.maximum.accumulate(np.maximum(mu, 1e-3))
    mu = mu + 1e-3 * np.arange(m)
    nat = NaturalParams(mu, sigma, rmz, rdz, beta, np.full(m, 1.0 / m))
    return from_natural(nat)


def random_starts(m: int, n: int, seed: int = 0, bounds: BoxBounds | None = None) -> list:
    """Uniform draws from the optimizer box (correlations shrunk to +-0.95)."""
    bounds = bounds or optimizer_box(m)
    rng = np.random.default_rng(seed)
    lo = np.maximum(bounds.lower, -10.0)
    hi = np.minimum(bounds.upper, 10.0)
    rho = slice(2 * m, 4 * m)
    lo[rho] = np.maximum(lo[rho], -0.95)
    hi[rho] = np.minimum(hi[rho], 0.95)
    return [UnconstrainedParams.from_flat(rng.uniform(lo, hi)) for _ in range(n)]


def direct_fits(data: TwinDataset, spec: ModelSpec, starts: Sequence,
                cfg: OptimConfig | None = None) -> list[OptimResult]:
    return [minimize(s, data, spec, cfg) for s in starts]


def best_fit(results: Sequence[OptimResult]) -> OptimResult:
    conv = [r for r in results if r.converged] or list(results)
    return min(conv, key=lambda r: r.nll)


# ---------------------------------------------------------------------------
# Component collapse
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CollapseSummary:
    n_effective_components: int
    collapsed_pairs: tuple
    empty_components: tuple
    per_draw: np.ndarray = field(repr=False, default=None)


def _effective_count(weights, gaps, weight_eps, gap_eps) -> int:
    m = len(weights)
    count = 0
    k = 0
    while k < m:
        # a run of components joined by vanishing mean gaps counts once
        active = weights[k] > weight_eps
        while k + 1 < m and gaps[k] < gap_eps:
            k += 1
            active = active or weights[k] > weight_eps
        count += int(active)
        k += 1
    return count


def detect_collapse(chain: Chain, weight_eps: float = 1e-3,
                    mean_gap_eps: float = 1e-3) -> CollapseSummary:
    """Count effectively distinct components across a chain.

    A component is empty when its median weight is at most ``weight_eps``;
    neighbouring components collapse when the median gap between their means
    is below ``mean_gap_eps``.
    """
    m = chain.n_components
    nat = chain.natural_draws()
    weights = nat[:, 4 * m + 1:]
    with np.errstate(over="ignore"):
        gaps = np.exp(chain.draws[:, 1:m])
    per_draw = np.array([_effective_count(w, g, weight_eps, mean_gap_eps)
                         for w, g in zip(weights, gaps)], dtype=int)
    med_w = np.median(weights, axis=0)
    med_gap = np.median(gaps, axis=0) if m > 1 else np.zeros(0)
    pairs = tuple((k + 1, k + 2) for k in range(m - 1) if med_gap[k] < mean_gap_eps)
    empty = tuple(k + 1 for k in range(m) if med_w[k] <= weight_eps)
    n_eff = _effective_count(med_w, med_gap, weight_eps, mean_gap_eps)
    return CollapseSummary(n_eff, pairs, empty, per_draw)


def collapse_of_params(params: NaturalParams | UnconstrainedParams, weight_eps: float = 1e-3,
                       mean_gap_eps: float = 1e-3) -> int:
    """Effective component count of a single parameter vector."""
    nat = params if isinstance(params, NaturalParams) else to_natural(params)
    return _effective_count(nat.p, np.diff(nat.mu), weight_eps, mean_gap_eps)


def failure_counts(report: ExplorationReport) -> dict:
    counts = {t.value: 0 for t in Termination}
    for r in report.per_restart:
        counts[r.result.termination.value] += 1
    return counts


def restart_generic(starts: Sequence[np.ndarray], fun: Callable, lower=None, upper=None,
                    cfg: OptimConfig | None = None, natural: Callable | None = None,
                    param_tol: float = PARAM_TOL, nll_tol: float = NLL_TOL):
    """Restart :func:`~twinmix.optimizer.minimize_function` from each start and cluster.

    Returns ``(outcomes, clusters)``; ``natural`` maps optimizer coordinates to
    the scale used for clustering (identity by default).
    """
    outcomes = [minimize_function(fun, s, lower, upper, cfg) for s in starts]
    conv = [(i, o) for i, o in enumerate(outcomes) if o.converged]
    if not conv:
        return outcomes, []
    nat = natural or (lambda x: x)
    pts = np.array([np.atleast_1d(nat(o.x)) for _, o in conv])
    vals = np.array([o.f for _, o in conv])
    return outcomes, cluster_optima(pts, vals, [i for i, _ in conv], param_tol, nll_tol)
