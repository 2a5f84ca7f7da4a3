"""Simulate twin data, fit mixtures with one to three components, compare them.

Run with ``python demos/01_simulate_and_fit.py``.  Takes a few seconds.
"""
from twinmix.diagnostics import aic_bic, global_quantities, n_free_params
from twinmix.explorer import best_fit, direct_fits, moment_start, random_starts
from twinmix.model import ModelSpec, simulate
from twinmix.optimizer import minimize, standard_errors
from twinmix.params import SIMULATION_TRUTH, from_natural, natural_names

# 1200 pairs: a third monozygotic, half of them male
data = simulate(SIMULATION_TRUTH, seed=1)
print(f"{len(data)} pairs, {data.n_mz} MZ, {data.n_dz} DZ")

# Start at the generating values and look at the recovered estimates
fit = minimize(from_natural(SIMULATION_TRUTH), data, ModelSpec(3))
se = standard_errors(fit.argmin, data)
print(f"\nthree components: nll {fit.nll:.2f} after {fit.iterations} iterations "
      f"({fit.termination.value})")
print(f"{'param':<10}{'truth':>9}{'estimate':>10}{'se':>8}")
for name, t, e, s in zip(natural_names(3), SIMULATION_TRUTH.flat, fit.natural.flat, se):
    print(f"{name:<10}{t:9.3f}{e:10.3f}{s:8.3f}")

# Population-level mean, SD and twin correlations implied by the mixture
for label, n in (("truth", SIMULATION_TRUTH), ("fit", fit.natural)):
    g = global_quantities(n)
    print(f"{label:<6} mu_g {g.mu_g:.3f}  sigma_g {g.sigma_g:.3f}  "
          f"rho_mz_g {g.rho_mz_g:.3f}  rho_dz_g {g.rho_dz_g:.3f}")

# Smaller models: best of a moment-based start and ten random starts
print(f"\n{'m':>2}{'k':>4}{'nll':>11}{'AIC':>10}{'BIC':>10}")
for m in (1, 2, 3):
    starts = [moment_start(data, m), *random_starts(m, 10, seed=m)]
    res = best_fit(direct_fits(data, ModelSpec(m), starts))
    k = n_free_params(m)
    aic, bic = aic_bic(res.nll, k, len(data))
    print(f"{m:2d}{k:4d}{res.nll:11.2f}{aic:10.1f}{bic:10.1f}")
