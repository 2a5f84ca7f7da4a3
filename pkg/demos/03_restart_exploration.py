"""Restart the optimizer from every draw of a chain and group the optima.

First on the twin model, where a bounded chain leads back to the direct fit
only; then on a one-parameter toy with two basins, where the same procedure
finds both.
"""
import numpy as np

from twinmix.explorer import (Strategy, direct_fits, failure_counts, random_starts, restart_all,
                              restart_generic, run_strategy)
from twinmix.model import ModelSpec, simulate
from twinmix.nuts import SamplerConfig, run_nuts
from twinmix.optimizer import minimize
from twinmix.params import SIMULATION_TRUTH, from_natural, sampler_box

data = simulate(SIMULATION_TRUTH, seed=1)
spec = ModelSpec(3)

# Direct fits from the truth and from random points in the sampling box
direct = direct_fits(data, spec, [from_natural(SIMULATION_TRUTH),
                                  *random_starts(3, 20, seed=8, bounds=sampler_box(3))])
nlls = sorted(r.nll for r in direct if r.converged)
print(f"direct fits: best nll {nlls[0]:.4f}, worst converged {nlls[-1]:.4f}")

start = minimize(from_natural(SIMULATION_TRUTH), data, spec).argmin
chain = run_strategy(Strategy.bounded(sampler_box(3)), start, data, spec,
                     SamplerConfig(n_iterations=600, n_warmup=300, seed=1))
report = restart_all(chain, data, spec)
print(f"{report.n_converged} of {len(report.per_restart)} restarts converged, "
      f"{len(report.optima_clusters)} distinct optimum")
print(f"best restart nll {report.best.nll:.4f} (lowest sampled {chain.min_nll():.4f})")
print("terminations:", {k: v for k, v in failure_counts(report).items() if v})

# A toy likelihood with a deep basin near +3 and a shallower one near -3
rng = np.random.default_rng(0)
x = np.r_[rng.normal(3, 1, 60), rng.normal(-3, 1, 40)]
w = 0.7


def toy(theta):
    t = float(theta[0])
    a = np.log(w) - 0.5 * (x - t) ** 2
    b = np.log1p(-w) - 0.5 * (x + t) ** 2
    ll = np.logaddexp(a, b)
    r = np.exp(a - ll)
    return float(-ll.sum()), np.array([-np.sum(r * (x - t) - (1 - r) * (x + t))])


# Heating the target by 200 lets one chain cross between the basins
run = run_nuts(lambda q: tuple(v / -200.0 for v in toy(q)), np.array([0.5]), 2000, 500, seed=3)
_, clusters = restart_generic(run.draws[::5], toy, np.array([-10.0]), np.array([10.0]))
print("\ntoy problem:")
for c in clusters:
    print(f"  theta {c.representative[0]:+.4f}  nll {c.nll:.3f}  reached from {c.count} starts")
