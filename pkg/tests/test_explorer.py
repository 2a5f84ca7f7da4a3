import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from reference import bimodal_toy
from twinmix import explorer
from twinmix.errors import DomainError, StuckChain
from twinmix.explorer import (Strategy, assemble_report, cluster_optima, collapse_of_params,
                              detect_collapse, failure_counts, moment_start, random_starts,
                              restart_all, restart_generic, run_strategy)
from twinmix.model import ModelSpec, nll_value
from twinmix.nuts import Chain, SamplerConfig, run_nuts
from twinmix.optimizer import Termination
from twinmix.params import (SIMULATION_TRUTH, FixedMask, NaturalParams, from_natural,
                            natural_names, optimizer_box)

SHORT = SamplerConfig(n_iterations=60, n_warmup=30, seed=4)


def fake_chain(draws, nll=None):
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    k = len(draws)
    nll = np.zeros(k) if nll is None else np.asarray(nll, dtype=float)
    return Chain(draws, nll, np.ones(k), np.ones(k, dtype=int), np.zeros(k, dtype=int), 0.1,
                 np.ones(draws.shape[1]))


# --- strategies -----------------------------------------------------------------


def test_strategy_validation():
    with pytest.raises(DomainError):
        Strategy("anneal")
    with pytest.raises(DomainError):
        Strategy("fixed")
    with pytest.raises(DomainError):
        Strategy("bounded")
    with pytest.raises(DomainError):
        Strategy.seed_loop(0)
    assert Strategy.seed_loop(4).to_dict() == {"kind": "seedloop", "n_seeds": 4}


def test_seed_loop_returns_min_nll_chain(monkeypatch, data, start):
    minima = {4: 12.0, 5: 3.0, 6: 7.0, 7: 5.0}

    def fake_sample(start, data, spec, cfg):
        return replace(fake_chain(np.zeros((3, 15)), [20.0, minima[cfg.seed], 9.0]), seed=cfg.seed)
    monkeypatch.setattr(explorer, "sample", fake_sample)
    chain = run_strategy(Strategy.seed_loop(4), start, data, ModelSpec(3), SHORT)
    assert chain.seed == 5 and chain.min_nll() == 3.0
    assert [s["seed"] for s in chain.meta["per_seed"]] == [4, 5, 6, 7]


def test_seed_loop_skips_stuck_chains(monkeypatch, data, start):
    def fake_sample(start, data, spec, cfg):
        if cfg.seed % 2 == 0:
            raise StuckChain("stuck")
        return replace(fake_chain(np.zeros((2, 15)), [float(cfg.seed), 50.0]), seed=cfg.seed)
    monkeypatch.setattr(explorer, "sample", fake_sample)
    chain = run_strategy(Strategy.seed_loop(3), start, data, ModelSpec(3), SHORT)
    assert chain.seed == 5
    assert [s["stuck"] for s in chain.meta["per_seed"]] == [True, False, True]
    with pytest.raises(StuckChain):
        run_strategy(Strategy.seed_loop(1), start, data, ModelSpec(3), SHORT)


def test_seed_loop_of_one_is_base(data, start):
    a = run_strategy(Strategy.seed_loop(1), start, data, ModelSpec(3), SHORT)
    b = run_strategy(Strategy.base(), start, data, ModelSpec(3), SHORT)
    np.testing.assert_array_equal(a.draws, b.draws)
    np.testing.assert_array_equal(a.nll_per_draw, b.nll_per_draw)


def test_fixed_strategy_holds_alpha(data, start):
    mask = FixedMask.from_groups(start, ["alpha"])
    chain = run_strategy(Strategy.fixed_subset(mask), start, data, ModelSpec(3), SHORT)
    assert np.all(chain.draws[:, :3] == start.flat[:3])
    assert chain.meta["strategy"] == "fixed"


# --- clustering -----------------------------------------------------------------


def test_cluster_tolerances():
    pts = np.array([[0.0, 0.0], [5e-5, 0.0], [2e-4, 0.0], [0.0, 0.0]])
    vals = np.array([1.0, 1.0 + 1e-7, 1.0, 1.0 + 1e-5])
    clusters = cluster_optima(pts, vals)
    assert sorted(c.count for c in clusters) == [1, 1, 2]
    assert cluster_optima(np.zeros((0, 2)), []) == []


def test_cluster_count_is_order_invariant():
    rng = np.random.default_rng(0)
    centers = np.array([[0.0, 1.0], [0.5, 1.0], [3.0, -1.0]])
    pts = np.repeat(centers, 20, axis=0) + rng.uniform(-2e-5, 2e-5, (60, 2))
    vals = np.repeat([1.0, 2.0, 3.0], 20) + rng.uniform(-2e-7, 2e-7, 60)
    ref = cluster_optima(pts, vals)
    assert len(ref) == 3
    for seed in range(5):
        perm = np.random.default_rng(seed).permutation(60)
        got = cluster_optima(pts[perm], vals[perm], perm)
        assert [(c.count, c.members) for c in got] == [(c.count, c.members) for c in ref]


# --- restarts on the twin model -------------------------------------------------


def test_restarts_from_bounded_draws(data, fit, bounded_chain):
    sub = replace(bounded_chain, draws=bounded_chain.draws[::25],
                  nll_per_draw=bounded_chain.nll_per_draw[::25])
    rep = restart_all(sub, data, ModelSpec(3))
    assert rep.n_converged == len(sub) and rep.n_failed == 0
    assert len(rep.optima_clusters) == 1
    assert abs(rep.best.nll - fit.nll) < 1e-3
    assert np.max(np.abs(rep.best.natural.flat - fit.natural.flat)) < 1e-3
    assert [r.start_index for r in rep.per_restart] == list(range(len(sub)))


def test_restart_report_independent_of_threads(data, bounded_chain):
    sub = replace(bounded_chain, draws=bounded_chain.draws[:6], nll_per_draw=bounded_chain.nll_per_draw[:6])
    one = restart_all(sub, data, ModelSpec(3), threads=1)
    two = restart_all(sub, data, ModelSpec(3), threads=2)
    assert json.dumps(one.to_dict()) == json.dumps(two.to_dict())


def test_invalid_draw_is_recorded_not_raised(data, start):
    bad = start.flat.copy()
    bad[7] = np.nan
    rep = restart_all(fake_chain([start.flat, bad], [1.0, np.nan]), data, ModelSpec(3))
    assert rep.per_restart[1].result.termination is Termination.INVALID_START
    assert rep.n_converged == 1 and rep.n_failed == 1
    assert failure_counts(rep)["InvalidStart"] == 1


def test_report_serialisation(tmp_path, data, start):
    rep = restart_all(fake_chain([start.flat], [nll_value(start.flat, data)]), data, ModelSpec(3))
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["n_converged"] == 1 and len(d["optima_clusters"]) == 1
    p = tmp_path / "restarts.csv"
    rep.write_restarts_csv(p)
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["start_index", "converged", "termination", "nll", *natural_names(3)]
    assert float(rows[1][3]) == rep.best.nll


def test_failed_restarts_counted_without_abort():
    rep = assemble_report([], np.inf)
    assert rep.best is None and rep.n_converged == 0 and rep.optima_clusters == []
    with pytest.raises(DomainError):
        restart_all(fake_chain(np.zeros((0, 15))), None, ModelSpec(3))


# --- starting points ------------------------------------------------------------


@pytest.mark.parametrize("m", [1, 2, 3])
def test_moment_start_is_valid(data, m):
    s = moment_start(data, m)
    assert np.isfinite(nll_value(s.flat, data))


def test_random_starts_in_box():
    starts = random_starts(3, 20, seed=1)
    box = optimizer_box(3)
    assert all(box.contains(s.flat) for s in starts)
    assert all(np.all(np.abs(s.flat[6:12]) <= 0.95) for s in starts)


# --- collapse -------------------------------------------------------------------


def collapsed_draws(**change):
    n = SIMULATION_TRUTH.to_dict() | change
    return from_natural(NaturalParams.from_dict(n)).flat


def test_empty_component_detected():
    draws = [collapsed_draws(p=[0.6, 4e-4, 0.3996]), collapsed_draws(p=[0.6, 2e-4, 0.3998])]
    s = detect_collapse(fake_chain(draws))
    assert s.n_effective_components == 2 and s.empty_components == (2,)


def test_healthy_bounded_chain_has_three(bounded_chain):
    s = detect_collapse(bounded_chain)
    assert s.n_effective_components == 3 and s.collapsed_pairs == ()
    assert np.all(s.per_draw == 3)


def test_coincident_means_collapse():
    theta = from_natural(SIMULATION_TRUTH).flat
    theta[1] = np.log(5e-7)
    s = detect_collapse(fake_chain([theta, theta]))
    assert s.collapsed_pairs == ((1, 2),) and s.n_effective_components == 2
    assert collapse_of_params(SIMULATION_TRUTH) == 3


# --- multimodal oracle ----------------------------------------------------------


def test_bimodal_profile_two_clusters():
    fun, _ = bimodal_toy()
    temp = 200.0  # flattens the ~380-unit barrier between the basins to ~2 units
    run = run_nuts(lambda q: tuple(v / -temp for v in fun(q)), np.array([0.5]), 2000, 500, seed=3)
    starts = run.draws[::5]
    assert 0.2 < np.mean(starts > 0) < 0.8
    outcomes, clusters = restart_generic(starts, fun, np.array([-10.0]), np.array([10.0]))
    assert len(clusters) == 2
    grid = np.linspace(-6, 6, 10_000)
    values = np.array([fun([t])[0] for t in grid])
    best = clusters[0]
    assert best.nll <= values.min() + 1e-4 and values.min() - best.nll < 1e-4
    assert abs(best.representative[0] - grid[values.argmin()]) < 1.3e-3
