"""Acceptance criteria 1-10.

Each test records one PASS/FAIL line (printed in the terminal summary) and
asserts the same condition, including its wall-clock limit.
"""
import time

import numpy as np
import pytest
from scipy import stats

from reference import bimodal_toy, fd_gradient, random_valid_points
from twinmix.diagnostics import aic_bic, geweke, global_quantities, n_free_params
from twinmix.explorer import (Strategy, best_fit, cluster_optima, direct_fits, moment_start,
                              random_starts, restart_all, restart_generic, run_strategy)
from twinmix.model import ModelSpec, nll, simulate
from twinmix.nuts import SamplerConfig, leapfrog, run_nuts
from twinmix.optimizer import OptimConfig, minimize, standard_errors
from twinmix.params import SIMULATION_TRUTH, FixedMask, from_natural, sampler_box

RESULTS: list[str] = []


def record(number, title, ok, detail, elapsed, limit):
    ok = bool(ok) and elapsed < limit
    RESULTS.append(f"{'PASS' if ok else 'FAIL'}  {number:>2}. {title}: {detail} "
                   f"[{elapsed:.3g} s, limit {limit:g} s]")
    return ok


def best_of(data, m, n_random=10, seed=0):
    """Best direct fit from the moment start plus random box starts."""
    starts = [moment_start(data, m), *random_starts(m, n_random, seed)]
    if m == 3:
        starts.append(from_natural(SIMULATION_TRUTH))
    return best_fit(direct_fits(data, ModelSpec(m), starts))


def test_01_global_quantities():
    t = time.perf_counter()
    g = global_quantities(SIMULATION_TRUTH)
    elapsed = time.perf_counter() - t
    got = np.array(g.as_tuple())
    # printed row mixes rounding and truncation; allow one unit in the last digit
    ok = np.all(np.abs(got - [22.30, 2.33, 0.92, 0.87]) < 0.01)
    assert record(1, "global quantities of truth", ok, f"{np.round(got, 5).tolist()}",
                  elapsed, 1e-3)


def test_02_aic_bic():
    t = time.perf_counter()
    aic, bic = aic_bic(4070.52, 15, 1200)
    elapsed = time.perf_counter() - t
    ok = abs(aic - 8171.04) < 1e-9 and abs(bic - 8247.4) < 0.05 and round(aic) == 8171 \
        and round(bic) == 8247
    assert record(2, "AIC/BIC identity", ok, f"aic={aic:.4f} bic={bic:.4f}", elapsed, 1e-3)


def test_03_gradient(data):
    t = time.perf_counter()
    worst = 0.0
    for theta in random_valid_points(100, seed=2024):
        g = nll(theta, data).gradient
        fd = fd_gradient(theta, data)
        # relative error with an absolute floor for near-zero components
        worst = max(worst, float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-2))))
    elapsed = time.perf_counter() - t
    assert record(3, "gradient vs finite differences at 100 points", worst < 1e-6,
                  f"max rel err {worst:.2e}", elapsed, 30)


def test_04_recovery():
    t = time.perf_counter()
    d = simulate(SIMULATION_TRUTH, seed=1)
    res = minimize(from_natural(SIMULATION_TRUTH), d, ModelSpec(3))
    se = standard_errors(res.argmin, d)
    z = np.abs(res.natural.flat - SIMULATION_TRUTH.flat) / se
    elapsed = time.perf_counter() - t
    ok = res.converged and np.all(np.isfinite(z)) and np.all(z < 4)
    assert record(4, "recovery within 4 SE", ok,
                  f"converged={res.converged} max|z|={np.max(z):.2f}", elapsed, 60)


def test_05_model_selection(data):
    t = time.perf_counter()
    ic = {}
    for m in (1, 2, 3):
        fit = best_of(data, m)
        ic[m] = aic_bic(fit.nll, n_free_params(m), len(data))
    elapsed = time.perf_counter() - t
    ok = ic[3][0] < ic[2][0] < ic[1][0] and ic[3][1] < ic[2][1] < ic[1][1]
    detail = " ".join(f"m={m}: {a:.1f}/{b:.1f}" for m, (a, b) in ic.items())
    assert record(5, "AIC and BIC order m=3 < m=2 < m=1", ok, detail, elapsed, 300)


def test_06_sampler_calibration():
    t = time.perf_counter()

    def std_normal(q):
        return -0.5 * float(q @ q), -q
    run = run_nuts(std_normal, np.array([2.0, -2.0]), n_iterations=3000, n_warmup=1000, seed=3)
    x = run.draws
    mean_ok = np.all(np.abs(x.mean(axis=0)) < 0.1)
    var_ok = np.all(np.abs(x.var(axis=0, ddof=1) - 1) < 0.15)
    acc = float(run.accept_stat.mean())
    rng = np.random.default_rng(0)
    q0, p0 = rng.normal(size=2), rng.normal(size=2)
    q, p = q0, p0
    for _ in range(50):
        q, p = leapfrog(q, p, run.step_size, lambda v: -v)
    p = -p
    for _ in range(50):
        q, p = leapfrog(q, p, run.step_size, lambda v: -v)
    rev = float(max(np.max(np.abs(q - q0)), np.max(np.abs(-p - p0))))
    # KS assumes independent draws: thin the 2000 draws to every 5th
    ks = min(stats.kstest(x[::5, j], "norm").pvalue for j in range(2))
    elapsed = time.perf_counter() - t
    ok = x.shape == (2000, 2) and mean_ok and var_ok and abs(acc - 0.95) < 0.05 \
        and rev < 1e-8 and ks > 0.01
    detail = (f"mean={np.round(x.mean(axis=0), 3).tolist()} var={np.round(x.var(axis=0), 3).tolist()}"
              f" accept={acc:.3f} reversibility={rev:.1e} KS p={ks:.3f}")
    assert record(6, "NUTS on a 2-D standard Gaussian", ok, detail, elapsed, 30)


@pytest.mark.slow
def test_07_strategy_contracts(data, start, bounded_chain):
    spec = ModelSpec(3)
    t = time.perf_counter()
    mask = FixedMask.from_groups(start, ["alpha"])
    fixed = run_strategy(Strategy.fixed_subset(mask), start, data, spec, SamplerConfig(seed=2))
    fixed_ok = bool(np.all(fixed.draws[:, mask.fixed] == start.flat[mask.fixed]))
    box = sampler_box(3)
    box_ok = all(box.contains(d) for d in bounded_chain.draws)
    t_loop = time.perf_counter()
    loop = run_strategy(Strategy.seed_loop(15), start, data, spec, SamplerConfig(seed=100))
    loop_elapsed = time.perf_counter() - t_loop
    minima = [s["min_nll"] for s in loop.meta["per_seed"] if not s["stuck"]]
    loop_ok = len(loop.meta["per_seed"]) == 15 and loop.min_nll() == min(minima)
    elapsed = time.perf_counter() - t
    detail = (f"fixed bit-exact={fixed_ok} bounded in box={box_ok} seed loop min={loop_ok}"
              f" (15 x 1000 iterations in {loop_elapsed:.0f} s)")
    assert record(7, "strategy contracts", fixed_ok and box_ok and loop_ok, detail, elapsed, 600)


@pytest.mark.slow
def test_08_explorer_finding(data, bounded_chain):
    spec = ModelSpec(3)
    t = time.perf_counter()
    direct = direct_fits(data, spec, [from_natural(SIMULATION_TRUTH),
                                      *random_starts(3, 20, seed=8, bounds=sampler_box(3))])
    best = best_fit(direct)
    rep = restart_all(bounded_chain, data, spec, OptimConfig())
    # the shared chain was sampled once for the session; charge its cost here
    elapsed = time.perf_counter() - t + bounded_chain.meta["elapsed"]
    conv = [r.result for r in rep.per_restart if r.result.converged]
    min_restart = min(r.nll for r in conv)
    single = len(rep.optima_clusters) == 1
    diff = float(np.max(np.abs(rep.optima_clusters[0].representative - best.natural.flat)))
    ok = min_restart >= best.nll - 1e-6 and single and diff < 1e-4
    detail = (f"{rep.n_converged}/{len(rep.per_restart)} converged, "
              f"{len(rep.optima_clusters)} cluster(s), min restart - best direct = "
              f"{min_restart - best.nll:.2e}, max param diff {diff:.1e}")
    assert record(8, "restarts from a bounded chain find only the direct fit", ok, detail,
                  elapsed, 900)


def test_09_bimodal_oracle():
    t = time.perf_counter()
    fun, _ = bimodal_toy()
    temp = 200.0
    run = run_nuts(lambda q: tuple(v / -temp for v in fun(q)), np.array([0.5]), 2000, 500, seed=3)
    _, clusters = restart_generic(run.draws[::5], fun, np.array([-10.0]), np.array([10.0]))
    grid = np.linspace(-6, 6, 10_000)
    values = np.array([fun([g])[0] for g in grid])
    elapsed = time.perf_counter() - t
    gap = clusters[0].nll - values.min()
    ok = len(clusters) == 2 and abs(gap) < 1e-4 \
        and abs(clusters[0].representative[0] - grid[values.argmin()]) < grid[1] - grid[0]
    detail = (f"{len(clusters)} clusters, global theta={clusters[0].representative[0]:.5f} "
              f"vs grid {grid[values.argmin()]:.5f}, nll gap {gap:.1e}")
    assert record(9, "bimodal profile oracle", ok, detail, elapsed, 60)


def test_10_geweke_distribution():
    t = time.perf_counter()
    rng = np.random.default_rng(10)
    z = np.abs([geweke(rng.standard_normal(10_000)) for _ in range(500)])
    elapsed = time.perf_counter() - t
    mean_abs, frac = float(z.mean()), float(np.mean(z <= 1.28))
    ok = abs(mean_abs - 0.798) < 0.08 and abs(frac - 0.80) < 0.05
    assert record(10, "Geweke Z on iid chains", ok,
                  f"mean|Z|={mean_abs:.3f} pass fraction={frac:.3f}", elapsed, np.inf)


def test_cluster_identity_tolerances_match_criterion():
    # the tolerances used by criteria 8 and 9
    assert len(cluster_optima(np.array([[0.0], [9e-5]]), [1.0, 1.0 + 9e-7])) == 1
