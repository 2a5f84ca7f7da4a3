import csv
import json
import math

import numpy as np
import pytest
from scipy import signal

from twinmix.diagnostics import (GEWEKE_CRITERION, GewekeResult, aic_bic, chain_global_quantities,
                                 diagnostics_report, geweke, geweke_chain, global_quantities,
                                 n_free_params, spectral_density_at_zero, summarize,
                                 write_summary_csv)
from twinmix.errors import ChainTooShort, DomainError, ZeroVariance
from twinmix.nuts import Chain
from twinmix.params import SIMULATION_TRUTH, NaturalParams, from_natural, natural_names


def const_chain(theta, k=200):
    draws = np.tile(np.asarray(theta, dtype=float), (k, 1))
    return Chain(draws, np.zeros(k), np.ones(k), np.ones(k, dtype=int), np.zeros(k, dtype=int),
                 0.1, np.ones(draws.shape[1]))


# --- global quantities ----------------------------------------------------------


def test_table_two_true_values():
    g = global_quantities(SIMULATION_TRUTH)
    # the printed row mixes rounding (2.33) and truncation (0.92), so compare
    # to within one unit of the last printed digit
    assert np.all(np.abs(np.array(g.as_tuple()) - [22.30, 2.33, 0.92, 0.87]) < 0.01)
    np.testing.assert_allclose(g.as_tuple(), (22.3, 2.32594, 0.92606, 0.87246), atol=5e-6)


def test_global_single_component_is_that_component():
    n = NaturalParams([21, 23, 28], [1.5, 1, 1], [0.7, 0.5, 0.3], [0.4, 0.3, -0.2], 2.0, [1, 0, 0])
    g = global_quantities(n)
    assert g.as_tuple() == pytest.approx((21, 1.5, 0.7, 0.4), abs=1e-12)


def test_global_rejects_bad_weights():
    n = NaturalParams([21, 23, 28], [1, 1, 1], [0] * 3, [0] * 3, 0.0, [0.5, 0.2, 0.2])
    with pytest.raises(DomainError):
        global_quantities(n)


def test_chain_global_methods_agree_on_constant_chain():
    chain = const_chain(from_natural(SIMULATION_TRUTH).flat)
    a = chain_global_quantities(chain, "per_draw").as_tuple()
    b = chain_global_quantities(chain, "mean_params").as_tuple()
    np.testing.assert_allclose(a, global_quantities(SIMULATION_TRUTH).as_tuple(), rtol=1e-12)
    np.testing.assert_allclose(a, b, rtol=1e-12)


# --- information criteria -------------------------------------------------------


def test_aic_bic_examples():
    assert aic_bic(0.0, 1, 1) == (2.0, 0.0)
    aic, bic = aic_bic(4070.52, 15, 1200)
    assert aic == pytest.approx(8171.04, abs=1e-9)
    assert bic == pytest.approx(8247.39, abs=0.01)
    with pytest.raises(DomainError):
        aic_bic(1.0, 0, 10)


def test_free_parameter_counts():
    assert [n_free_params(m) for m in (1, 2, 3)] == [5, 10, 15]


# --- Geweke ---------------------------------------------------------------------


def test_spectral_density_of_white_noise():
    # Bartlett estimator SD is about sqrt(4 L / 3 n) = 0.04 here
    x = np.random.default_rng(0).normal(size=200_000)
    assert spectral_density_at_zero(x) == pytest.approx(1.0, abs=0.16)


def test_spectral_density_of_ar1():
    # S(0) = 1 / (1 - phi)^2 for unit innovations
    phi = 0.6
    x = signal.lfilter([1.0], [1.0, -phi], np.random.default_rng(1).normal(size=200_000))
    assert spectral_density_at_zero(x) == pytest.approx(1 / (1 - phi) ** 2, rel=0.16)


def test_trend_fails():
    assert abs(geweke(np.linspace(0, 1, 1000))) > 10 * GEWEKE_CRITERION


def test_constant_and_short_columns():
    with pytest.raises(ZeroVariance):
        geweke(np.ones(500))
    with pytest.raises(ChainTooShort):
        geweke(np.random.default_rng(0).normal(size=99))
    with pytest.raises(DomainError):
        geweke(np.zeros(500), 0.6, 0.5)


@pytest.mark.parametrize("a, b", [(3.0, 7.0), (-0.5, 100.0)])
def test_geweke_affine_invariance(a, b):
    x = np.random.default_rng(2).normal(size=2000)
    assert abs(geweke(a * x + b)) == pytest.approx(abs(geweke(x)), rel=1e-9)


def test_geweke_iid_scale():
    rng = np.random.default_rng(3)
    z = np.array([geweke(rng.normal(size=10_000)) for _ in range(100)])
    assert 0.6 < np.mean(np.abs(z)) < 1.0


def test_geweke_chain_marks_fixed_columns(bounded_chain):
    draws = bounded_chain.draws.copy()
    draws[:, 0] = draws[0, 0]
    chain = Chain(draws, bounded_chain.nll_per_draw, bounded_chain.accept_stat,
                  bounded_chain.tree_depth, bounded_chain.divergences, 0.1, np.ones(15))
    res = geweke_chain(chain)
    assert np.isnan(res.z_scores[0]) and res.passed[0]
    assert np.all(np.isfinite(res.z_scores[1:]))
    d = res.to_dict(natural_names(3)[:15])
    assert d["scores"][0]["z"] is None


def test_geweke_result_pass_flags():
    r = GewekeResult(np.array([0.5, -1.28, 1.3, np.nan]))
    assert r.passed.tolist() == [True, True, False, True]


# --- summaries ------------------------------------------------------------------


def test_constant_chain_has_zero_sd():
    rows = summarize(const_chain(from_natural(SIMULATION_TRUTH).flat))
    assert all(r.sd == 0.0 for r in rows)
    np.testing.assert_allclose([r.mean for r in rows], SIMULATION_TRUTH.flat, rtol=1e-12)


def test_summary_of_iid_gaussian_coordinate():
    rng = np.random.default_rng(4)
    draws = np.tile(from_natural(SIMULATION_TRUTH).flat, (20_000, 1))
    draws[:, 12] = rng.normal(2.0, 0.3, 20_000)  # beta is the identity on both scales
    k = len(draws)
    chain = Chain(draws, np.zeros(k), np.ones(k), np.ones(k, dtype=int), np.zeros(k, dtype=int),
                  0.1, np.ones(15))
    beta = summarize(chain)[12]
    assert beta.name == "beta"
    assert abs(beta.mean - 2.0) < 4 * 0.3 / math.sqrt(20_000)
    assert abs(beta.sd / 0.3 - 1) < 0.02


def test_summary_is_order_invariant(bounded_chain):
    perm = np.random.default_rng(5).permutation(len(bounded_chain))
    shuffled = Chain(bounded_chain.draws[perm], bounded_chain.nll_per_draw[perm],
                     bounded_chain.accept_stat, bounded_chain.tree_depth,
                     bounded_chain.divergences, 0.1, np.ones(15))
    a = [(r.mean, r.sd) for r in summarize(bounded_chain)]
    b = [(r.mean, r.sd) for r in summarize(shuffled)]
    np.testing.assert_allclose(a, b, rtol=1e-10)


def test_bounded_chain_means_near_truth(bounded_chain):
    rows = summarize(bounded_chain)
    for r, true in zip(rows, SIMULATION_TRUTH.flat):
        assert abs(r.mean - true) <= 4 * r.sd, r.name


def test_report_and_csv(tmp_path, bounded_chain, data):
    rep = json.loads(json.dumps(diagnostics_report(bounded_chain, len(data))))
    assert {"geweke", "global", "aic", "bic", "summary"} <= set(rep)
    assert rep["aic"] == pytest.approx(2 * 15 + 2 * bounded_chain.min_nll())
    p = tmp_path / "summary.csv"
    write_summary_csv(bounded_chain, p)
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["parameter", "mean", "sd"] and len(rows) == 17
