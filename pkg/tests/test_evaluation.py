import numpy as np
import pytest

from wwbarray.evaluation import (ONE_TARGET, TWO_TARGET, Match, ScenarioConfig, TrialRecord,
                                 aggregate, match_declarations, monte_carlo, train_threshold,
                                 trial_metrics)


def test_match_examples():
    m, fa = match_declarations([10.5, 20.0], [10.0, 12.0], 3.0)
    assert m == [Match(10.5, 10.0)] and fa == [20.0]
    r = trial_metrics(m, fa, 2)
    assert (r.pd, r.far, r.pr) == (0.5, 0.5, 0.0)
    assert r.sq_errors == (0.25,)


def test_match_window_inclusive_and_one_to_one():
    m, fa = match_declarations([3.0], [0.0], 3.0)
    assert len(m) == 1 and not fa
    # the stronger declaration claims the shared truth first
    m, fa = match_declarations([0.5, 0.1], [0.0], 3.0, magnitudes=[2.0, 1.0])
    assert m == [Match(0.5, 0.0)] and fa == [0.1]


def test_no_declarations_zero_far():
    r = trial_metrics([], [], 2)
    assert (r.pd, r.far, r.pr) == (0.0, 0.0, 0.0)


def test_wide_window_has_no_false_alarms():
    m, fa = match_declarations([-40.0, 50.0], [0.0, 10.0], 90.0)
    assert not fa and len(m) == 2


def test_aggregate():
    recs = [TrialRecord(1.0, 0.0, 1.0, (1.0,), 1), TrialRecord(0.0, 1.0, 0.0, (), 1)]
    p = aggregate(recs, 5.0, 0.3)
    assert (p.pd, p.far, p.pr, p.trials, p.gamma) == (0.5, 0.5, 0.5, 2, 0.3)
    assert p.rmse_deg == 1.0
    assert np.isnan(aggregate(recs[1:], 5.0, 0.3).rmse_deg)


def test_scenario_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(mode="three")
    with pytest.raises(ValueError):
        ScenarioConfig(mode=TWO_TARGET, snr_db=(0, 5), separation_deg=(5,))
    with pytest.raises(ValueError):
        ScenarioConfig(mode=TWO_TARGET, snr_db=(5,), separation_deg=(90,))
    with pytest.raises(ValueError):
        ScenarioConfig(trials=0)
    sc = ScenarioConfig(mode=TWO_TARGET, snr_db=(5,), separation_deg=(2.5, 5))
    assert sc.sweep() == [(2.5, 5.0, 2.5), (5.0, 5.0, 5.0)]


def test_pd_nondecreasing_in_snr(uniform_dilated):
    sc = ScenarioConfig(ONE_TARGET, snr_db=(0, 5, 10, 15), trials=200, seed=4)
    gamma = train_threshold(uniform_dilated, sc, np.arange(0.1, 1.0, 0.1))
    pts = monte_carlo(uniform_dilated, sc, gamma).points
    pd = [p.pd for p in pts]
    for a, b in zip(pd, pd[1:]):
        se = np.sqrt((a * (1 - a) + b * (1 - b)) / 200)
        assert b >= a - 2 * se - 1e-12
    assert pd[-1] > 0.95
    assert all(0 <= p.far <= 1 and 0 <= p.pr <= 1 for p in pts)


def test_monte_carlo_deterministic(mra):
    sc = ScenarioConfig(TWO_TARGET, snr_db=(10,), separation_deg=(5,), trials=20, seed=9)
    a = monte_carlo(mra, sc, 0.4)
    b = monte_carlo(mra, sc, 0.4)
    assert a == b
    c = monte_carlo(mra, ScenarioConfig(TWO_TARGET, snr_db=(10,), separation_deg=(5,),
                                        trials=20, seed=10), 0.4)
    assert c.points[0].records != a.points[0].records


def test_train_threshold_grid_membership(mra):
    sc = ScenarioConfig(ONE_TARGET, snr_db=(5,), trials=30, seed=1)
    grid = [0.2, 0.5, 0.8]
    assert train_threshold(mra, sc, grid) in grid
    assert train_threshold(mra, sc, [0.37]) == 0.37
    with pytest.raises(ValueError):
        train_threshold(mra, sc, [])


def test_noiseless_training_is_perfect(mra):
    sc = ScenarioConfig(ONE_TARGET, snr_db=(np.inf,), trials=30, seed=2)
    gamma = train_threshold(mra, sc, [0.1, 0.3, 0.5, 0.7, 0.9])
    p = monte_carlo(mra, sc, gamma).points[0]
    assert p.pd == 1.0 and p.far == 0.0
