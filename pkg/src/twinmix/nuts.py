"""No-U-Turn sampler with multinomial trajectory sampling.

The kernel follows the now-standard recipe: momentum is refreshed from
``N(0, M)``, the trajectory is doubled in a random direction until the
generalised no-U-turn criterion fails (checked across every merged subtree)
or the maximum depth is reached, and the next state is drawn by biased
progressive sampling at the top level and uniform progressive sampling
inside subtrees.  Warmup tunes the step size by dual averaging and a diagonal
inverse metric over expanding windows.

:func:`run_nuts` works on any ``y -> (log_density, grad)`` callable;
:func:`sample` wraps it for the twin mixture with optional fixing masks and
box bounds.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, StuckChain
from .model import ModelSpec, TwinDataset, nll_value, objective
from .params import (BoxBounds, FixedMask, UnconstrainedParams, bound_transform_full, embed,
                     inverse_bound_transform, natural_arrays, natural_names)

DIVERGENCE_THRESHOLD = 1000.0
_LOG_08 = math.log(0.8)


@dataclass(frozen=True)
class SamplerConfig:
    n_iterations: int = 1000
    n_warmup: int = 500
    target_accept: float = 0.95
    max_tree_depth: int = 10
    seed: int = 0
    mask: FixedMask | None = None
    bounds: BoxBounds | None = None
    init_step_size: float = 1.0
    stuck_fraction: float = 0.9

    def __post_init__(self):
        if not 0 <= self.n_warmup < self.n_iterations:
            raise DomainError("need 0 <= n_warmup < n_iterations")
        if not 0 < self.target_accept < 1:
            raise DomainError("target_accept must lie in (0, 1)")
        if self.max_tree_depth < 1:
            raise DomainError("max_tree_depth must be at least 1")

    def to_dict(self) -> dict:
        return {
            "n_iterations": self.n_iterations, "n_warmup": self.n_warmup,
            "target_accept": self.target_accept, "max_tree_depth": self.max_tree_depth,
            "seed": self.seed, "init_step_size": self.init_step_size,
            "mask": None if self.mask is None else self.mask.to_dict(),
            "bounds": None if self.bounds is None else self.bounds.to_dict(),
        }


@dataclass
class NutsRun:
    """Post-warmup output of :func:`run_nuts` in the sampler's own coordinates."""

    draws: np.ndarray
    log_density: np.ndarray
    accept_stat: np.ndarray
    tree_depth: np.ndarray
    divergent: np.ndarray
    n_leapfrog: np.ndarray
    step_size: float
    inv_mass_diag: np.ndarray
    warmup_divergent: int = 0


@dataclass
class Chain:
    """Post-warmup draws on the full unconstrained scale with per-draw NLL."""

    draws: np.ndarray
    nll_per_draw: np.ndarray
    accept_stat: np.ndarray
    tree_depth: np.ndarray
    divergences: np.ndarray
    step_size_final: float
    inv_mass_diag: np.ndarray
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.draws)

    @property
    def n_components(self) -> int:
        return self.draws.shape[1] // 5

    def natural_draws(self) -> np.ndarray:
        """Draws mapped to ``NaturalParams.flat`` layout, one row per draw."""
        m = self.n_components
        out = np.empty((len(self), 5 * m + 1))
        with np.errstate(over="ignore"):
            for i, theta in enumerate(self.draws):
                mu, sigma, rmz, rdz, beta, p, _ = natural_arrays(theta, m)
                out[i] = np.concatenate([mu, sigma, rmz, rdz, [beta], p])
        return out

    def min_nll(self) -> float:
        return float(np.min(self.nll_per_draw)) if len(self) else np.inf

    def best_draw(self) -> np.ndarray:
        return self.draws[int(np.argmin(self.nll_per_draw))]

    def to_csv(self, path) -> None:
        names = natural_names(self.n_components)
        nat = self.natural_draws()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", *names, "nll", "accept_stat", "tree_depth", "divergent"])
            for i in range(len(self)):
                w.writerow([i + 1, *(repr(float(v)) for v in nat[i]),
                            repr(float(self.nll_per_draw[i])), repr(float(self.accept_stat[i])),
                            int(self.tree_depth[i]), int(self.divergences[i])])


def read_chain_csv(path) -> Chain:
    """Rebuild a :class:`Chain` from its trace CSV (natural scale is inverted back)."""
    from .params import NaturalParams, from_natural

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n_nat = len(header) - 5
    m = (n_nat - 1) // 5
    draws, nll, acc, depth, div = [], [], [], [], []
    for r in body:
        nat = NaturalParams.from_flat([float(v) for v in r[1:1 + n_nat]])
        nat = NaturalParams(nat.mu, nat.sigma, nat.rho_mz, nat.rho_dz, nat.beta,
                            nat.p / nat.p.sum())
        draws.append(from_natural(nat).flat)
        nll.append(float(r[1 + n_nat]))
        acc.append(float(r[2 + n_nat]))
        depth.append(int(r[3 + n_nat]))
        div.append(int(r[4 + n_nat]))
    return Chain(np.array(draws).reshape(-1, 5 * m), np.array(nll), np.array(acc),
                 np.array(depth, dtype=int), np.array(div, dtype=int), float("nan"),
                 np.full(5 * m, np.nan))


# ---------------------------------------------------------------------------
# Integrator pieces
# ---------------------------------------------------------------------------


def momentum_refresh(rng: np.random.Generator, inv_mass_diag: np.ndarray) -> np.ndarray:
    """Draw ``p ~ N(0, M)`` for the diagonal mass ``M = 1 / inv_mass_diag``."""
    inv_mass_diag = np.asarray(inv_mass_diag, dtype=float)
    return rng.standard_normal(inv_mass_diag.size) / np.sqrt(inv_mass_diag)


def leapfrog(q, p, eps: float, grad, inv_mass=None):
    """One half-kick / drift / half-kick step.

    ``grad(q)`` returns the gradient of the log density.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    inv_mass = np.ones_like(q) if inv_mass is None else np.asarray(inv_mass, dtype=float)
    p_half = p + 0.5 * eps * grad(q)
    q_new = q + eps * inv_mass * p_half
    p_new = p_half + 0.5 * eps * grad(q_new)
    return q_new, p_new


class _State:
    __slots__ = ("q", "p", "logp", "grad", "p_sharp")

    def __init__(self, q, p, logp, grad, inv_mass):
        self.q = q
        self.p = p
        self.logp = logp
        self.grad = grad
        self.p_sharp = inv_mass * p


class _Tree:
    __slots__ = ("inner", "outer", "rho", "log_w", "proposal", "valid")

    def __init__(self, inner, outer, rho, log_w, proposal, valid):
        self.inner = inner
        self.outer = outer
        self.rho = rho
        self.log_w = log_w
        self.proposal = proposal
        self.valid = valid


def _no_u_turn(p_sharp_minus, p_sharp_plus, rho) -> bool:
    return float(p_sharp_plus @ rho) > 0.0 and float(p_sharp_minus @ rho) > 0.0


class _Kernel:
    """Mutable NUTS transition state for one chain."""

    def __init__(self, logp_grad, rng, max_depth, dim):
        self.logp_grad = logp_grad
        self.rng = rng
        self.max_depth = max_depth
        self.inv_mass = np.ones(dim)
        self.eps = 1.0
        # per-transition accumulators
        self.sum_accept = 0.0
        self.n_leapfrog = 0
        self.divergent = False

    def kinetic(self, p):
        return 0.5 * float(p @ (self.inv_mass * p))

    def _step(self, state: _State, eps: float) -> _State:
        p_half = state.p + 0.5 * eps * state.grad
        q = state.q + eps * self.inv_mass * p_half
        logp, grad = self.logp_grad(q)
        if not np.isfinite(logp):
            return _State(q, p_half, -np.inf, np.zeros_like(q), self.inv_mass)
        p = p_half + 0.5 * eps * grad
        return _State(q, p, logp, grad, self.inv_mass)

    def _build(self, depth: int, start: _State, direction: int, H0: float) -> _Tree:
        if depth == 0:
            s = self._step(start, direction * self.eps)
            H = -s.logp + self.kinetic(s.p)
            if math.isnan(H):
                H = math.inf
            self.n_leapfrog += 1
            self.sum_accept += min(1.0, math.exp(H0 - H)) if H > H0 else 1.0
            if H - H0 > DIVERGENCE_THRESHOLD:
                self.divergent = True
                return _Tree(s, s, s.p, -math.inf, s, False)
            return _Tree(s, s, s.p.copy(), H0 - H, s, True)
        a = self._build(depth - 1, start, direction, H0)
        if not a.valid:
            return a
        b = self._build(depth - 1, a.outer, direction, H0)
        if not b.valid:
            return b
        log_w = np.logaddexp(a.log_w, b.log_w)
        proposal = b.proposal if math.log(self.rng.random()) < b.log_w - log_w else a.proposal
        rho = a.rho + b.rho
        valid = (_no_u_turn(a.inner.p_sharp, b.outer.p_sharp, rho)
                 and _no_u_turn(a.inner.p_sharp, b.inner.p_sharp, a.rho + b.inner.p)
                 and _no_u_turn(a.outer.p_sharp, b.outer.p_sharp, b.rho + a.outer.p))
        return _Tree(a.inner, b.outer, rho, log_w, proposal, valid)

    def transition(self, q, logp, grad):
        p0 = momentum_refresh(self.rng, self.inv_mass)
        z0 = _State(q, p0, logp, grad, self.inv_mass)
        H0 = -logp + self.kinetic(p0)
        left = right = z0
        rho = p0.copy()
        log_w = 0.0
        sample = z0
        self.sum_accept = 0.0
        self.n_leapfrog = 0
        self.divergent = False
        depth = 0
        while depth < self.max_depth:
            direction = 1 if self.rng.random() > 0.5 else -1
            start = right if direction > 0 else left
            sub = self._build(depth, start, direction, H0)
            if not sub.valid:
                break
            depth += 1
            if sub.log_w > log_w or math.log(self.rng.random()) < sub.log_w - log_w:
                sample = sub.proposal
            log_w = np.logaddexp(log_w, sub.log_w)
            if direction > 0:
                far, near = left, right
                right = sub.outer
            else:
                far, near = right, left
                left = sub.outer
            rho_old = rho
            rho = rho_old + sub.rho
            persist = (_no_u_turn(far.p_sharp, sub.outer.p_sharp, rho)
                       and _no_u_turn(far.p_sharp, sub.inner.p_sharp, rho_old + sub.inner.p)
                       and _no_u_turn(near.p_sharp, sub.outer.p_sharp, sub.rho + near.p))
            if not persist:
                break
        accept = self.sum_accept / max(self.n_leapfrog, 1)
        return sample, accept, depth, self.divergent, self.n_leapfrog

    def find_reasonable_step(self, q, logp, grad):
        """Double or halve the step until a single leapfrog crosses acceptance 0.8."""
        direction = 0
        for _ in range(200):
            p = momentum_refresh(self.rng, self.inv_mass)
            H0 = -logp + self.kinetic(p)
            s = self._step(_State(q, p, logp, grad, self.inv_mass), self.eps)
            H = -s.logp + self.kinetic(s.p)
            delta = H0 - H if not math.isnan(H) else -math.inf
            if direction == 0:
                direction = 1 if delta > _LOG_08 else -1
            if direction == 1 and not delta > _LOG_08:
                break
            if direction == -1 and not delta < _LOG_08:
                break
            self.eps = self.eps * 2.0 if direction == 1 else self.eps * 0.5
            if self.eps > 1e7 or self.eps < 1e-12:
                raise DomainError(f"step size search diverged ({self.eps:g}); is the target proper?")
        return self.eps


class _DualAveraging:
    def __init__(self, target: float, gamma=0.05, kappa=0.75, t0=10.0):
        self.delta = target
        self.gamma, self.kappa, self.t0 = gamma, kappa, t0
        self.restart(1.0)

    def restart(self, eps: float):
        self.mu = math.log(10.0 * eps)
        self.s_bar = 0.0
        self.x_bar = 0.0
        self.counter = 0

    def learn(self, accept: float) -> float:
        self.counter += 1
        accept = min(1.0, accept)
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - accept)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / self.gamma
        x_eta = self.counter ** (-self.kappa)
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x
        return math.exp(x)

    def final(self) -> float:
        return math.exp(self.x_bar)


class _Windows:
    """Expanding metric-adaptation windows (75 / 25-doubling / 50 by default)."""

    def __init__(self, n_warmup, init_buffer=75, term_buffer=50, base_window=25):
        if init_buffer + base_window + term_buffer > n_warmup:
            init_buffer = int(0.15 * n_warmup)
            term_buffer = int(0.1 * n_warmup)
            base_window = n_warmup - (init_buffer + term_buffer)
        self.n_warmup = n_warmup
        self.init_buffer, self.term_buffer = init_buffer, term_buffer
        self.counter = 0
        self.size = base_window
        self.next_end = init_buffer + base_window - 1
        self.enabled = n_warmup >= 20

    def in_window(self) -> bool:
        return (self.enabled and self.counter >= self.init_buffer
                and self.counter < self.n_warmup - self.term_buffer
                and self.counter != self.n_warmup)

    def at_window_end(self) -> bool:
        return self.enabled and self.counter == self.next_end and self.counter != self.n_warmup

    def advance_window(self):
        last = self.n_warmup - self.term_buffer - 1
        if self.next_end == last:
            return
        self.size *= 2
        self.next_end = self.counter + self.size
        if self.next_end != last and self.next_end + 2 * self.size >= self.n_warmup - self.term_buffer:
            self.next_end = last


def run_nuts(logp_grad, y0, n_iterations: int = 1000, n_warmup: int = 500,
             target_accept: float = 0.95, max_tree_depth: int = 10, seed=0,
             init_step_size: float = 1.0, adapt_mass: bool = True) -> NutsRun:
    """Run one NUTS chain on ``logp_grad`` starting at ``y0``.

    Returns only post-warmup iterations.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    q = np.array(y0, dtype=float)
    logp, grad = logp_grad(q)
    if not np.isfinite(logp):
        raise DomainError("log density is not finite at the starting point")
    kernel = _Kernel(logp_grad, rng, max_tree_depth, q.size)
    kernel.eps = init_step_size
    if n_warmup > 0:
        kernel.find_reasonable_step(q, logp, grad)
    da = _DualAveraging(target_accept)
    da.restart(kernel.eps)
    windows = _Windows(n_warmup)
    w_n, w_mean, w_m2 = 0, np.zeros(q.size), np.zeros(q.size)

    n_keep = n_iterations - n_warmup
    draws = np.empty((n_keep, q.size))
    logps = np.empty(n_keep)
    accepts = np.empty(n_keep)
    depths = np.empty(n_keep, dtype=int)
    divs = np.zeros(n_keep, dtype=int)
    n_lf = np.empty(n_keep, dtype=int)
    warm_div = 0
    for it in range(n_iterations):
        state, accept, depth, divergent, n_leap = kernel.transition(q, logp, grad)
        q, logp, grad = state.q, state.logp, state.grad
        if it < n_warmup:
            warm_div += int(divergent)
            kernel.eps = da.learn(accept)
            if adapt_mass:
                if windows.in_window():
                    w_n += 1
                    delta = q - w_mean
                    w_mean += delta / w_n
                    w_m2 += delta * (q - w_mean)
                if windows.at_window_end():
                    windows.advance_window()
                    var = w_m2 / max(w_n - 1, 1)
                    kernel.inv_mass = (w_n / (w_n + 5.0)) * var + 1e-3 * (5.0 / (w_n + 5.0))
                    w_n, w_mean, w_m2 = 0, np.zeros(q.size), np.zeros(q.size)
                    kernel.find_reasonable_step(q, logp, grad)
                    da.restart(kernel.eps)
                windows.counter += 1
            if it == n_warmup - 1:
                kernel.eps = da.final()
        else:
            k = it - n_warmup
            draws[k] = q
            logps[k] = logp
            accepts[k] = accept
            depths[k] = depth
            divs[k] = int(divergent)
            n_lf[k] = n_leap
    return NutsRun(draws, logps, accepts, depths, divs, n_lf, kernel.eps,
                   kernel.inv_mass.copy(), warm_div)


# ---------------------------------------------------------------------------
# Twin-model front end
# ---------------------------------------------------------------------------


def twin_log_density(data: TwinDataset, m: int, mask: FixedMask | None,
                     bounds: BoxBounds | None):
    """Log target over the free (and, if bounded, logistic-transformed) coordinates.

    Returns ``(logp_grad, to_full, from_full)``.  The target is ``exp(-nll)``
    times the Jacobian of the bound transform.
    """
    size = 5 * m
    mask = mask or FixedMask.none(size)
    free = ~mask.fixed
    fun = objective(data, m)
    fb = None if bounds is None else bounds.restrict(mask)
    if fb is not None and not (np.any(np.isfinite(fb.lower)) or np.any(np.isfinite(fb.upper))):
        fb = None

    if fb is None:
        def logp_grad(y):
            f, g = fun(embed(y, mask))
            return -f, -g[free]

        def to_full(y):
            return embed(y, mask)

        def from_full(theta):
            return np.asarray(theta, dtype=float)[free]
    else:
        def logp_grad(y):
            c, log_jac, dc, dlj = bound_transform_full(y, fb)
            f, g = fun(embed(c, mask))
            if not np.isfinite(f):
                return -np.inf, np.zeros_like(y)
            return -f + log_jac, -g[free] * dc + dlj

        def to_full(y):
            return embed(bound_transform_full(y, fb)[0], mask)

        def from_full(theta):
            x = np.asarray(theta, dtype=float)[free]
            if np.any(x < fb.lower) or np.any(x > fb.upper):
                raise DomainError("starting point lies outside the sampling box")
            # nudge points sitting on a face of the box into its interior
            width = np.where(np.isfinite(fb.upper - fb.lower), fb.upper - fb.lower, 1.0)
            x = np.clip(x, fb.lower + 1e-9 * width, fb.upper - 1e-9 * width)
            return inverse_bound_transform(x, fb)
    return logp_grad, to_full, from_full


def sample(start: UnconstrainedParams | np.ndarray, data: TwinDataset, spec: ModelSpec,
           cfg: SamplerConfig | None = None) -> Chain:
    """Draw a NUTS chain from ``exp(-nll)`` (flat priors) for the twin mixture."""
    cfg = cfg or SamplerConfig()
    theta0 = start.flat if isinstance(start, UnconstrainedParams) else np.asarray(start, dtype=float)
    m = spec.n_components
    if theta0.size != spec.n_params:
        raise DomainError(f"start has {theta0.size} entries, model needs {spec.n_params}")
    if cfg.mask is not None:
        theta0 = embed(theta0[~cfg.mask.fixed], cfg.mask)
    logp_grad, to_full, from_full = twin_log_density(data, m, cfg.mask, cfg.bounds)
    y0 = from_full(theta0)
    if not np.isfinite(logp_grad(y0)[0]):
        raise DomainError("NLL is infinite at the starting point")
    run = run_nuts(logp_grad, y0, cfg.n_iterations, cfg.n_warmup, cfg.target_accept,
                   cfg.max_tree_depth, cfg.seed, cfg.init_step_size)
    draws = np.array([to_full(y) for y in run.draws]).reshape(len(run.draws), spec.n_params)
    nlls = np.array([nll_value(th, data) for th in draws])
    chain = Chain(draws, nlls, run.accept_stat, run.tree_depth, run.divergent, run.step_size,
                  run.inv_mass_diag, seed=cfg.seed,
                  meta={"n_leapfrog": run.n_leapfrog, "warmup_divergent": run.warmup_divergent})
    n_keep = len(draws)
    if n_keep and run.divergent.sum() > cfg.stuck_fraction * n_keep:
        raise StuckChain(f"{int(run.divergent.sum())} of {n_keep} post-warmup transitions diverged "
                         f"(seed {cfg.seed})")
    return chain
