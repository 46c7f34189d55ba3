import numpy as np
import pytest

from tntrules.bayes_opt import run_bo
from tntrules.evaluation import (
    EvalReport, ablation_configs, completeness, fidelity, holdout_fidelity, minima_hits, reports_to_csv,
    run_clustering_ablation, run_gp_mode, run_gt_mode, summary_table, union_volume_fraction,
)
from tntrules.evaluation import _allocate
from tntrules.problems import default_config, get_problem
from tntrules.rules import Rule, RuleSet


def _model(f):
    return lambda X: f(np.atleast_2d(X))


@pytest.fixture(scope="module")
def booth_trace():
    return run_bo(get_problem("booth"), 15, seed=0)


def test_fidelity_extremes():
    f = _model(lambda X: X.sum(axis=1))
    wide = RuleSet([Rule([0, 0], [1, 1], (-np.inf, np.inf))])
    assert fidelity(wide, f, 100, seed=0)[0] == 1.0
    disjoint = RuleSet([Rule([0, 0], [1, 1], (5, 6))])
    assert fidelity(disjoint, f, 100, seed=0)[0] == 0.0
    with pytest.raises(ValueError):
        fidelity(RuleSet([]), f)


def test_fidelity_matches_analytic_share():
    # f = x1 on the unit box, consequent [0, 0.25]: expected share 1/4
    rs = RuleSet([Rule([0, 0], [1, 1], (0, 0.25))])
    mean, per_rule, counts = fidelity(rs, _model(lambda X: X[:, 0]), 20000, seed=1)
    assert mean == pytest.approx(0.25, abs=4 * np.sqrt(0.25 * 0.75 / 20000))
    assert counts.tolist() == [20000]


def test_allocation_floor_and_proportion():
    counts = _allocate([1.0, 1e-6, 3.0], 400)
    assert counts.tolist() == [100, 10, 300]


def test_holdout_fidelity():
    rs = RuleSet([Rule([0], [1], (0, 1)), Rule([2], [3], (0, 1)), Rule([5], [6], (0, 1))])
    X = np.array([[0.5], [0.7], [2.5], [2.6], [2.7]])
    y = np.array([0.5, 2.0, 0.1, 0.2, 3.0])
    mean, per_rule, counts = holdout_fidelity(rs, X, y)
    assert counts.tolist() == [2, 3, 0]
    np.testing.assert_allclose(per_rule[:2], [0.5, 2 / 3])
    assert np.isnan(per_rule[2])
    assert mean == pytest.approx(3 / 5)


def test_completeness_and_hits():
    rs = RuleSet([Rule([0, 0, 0], [1, 1, 1], (0, 1))])
    assert completeness(rs, 6) == 0.5
    assert completeness(RuleSet([]), 2) == 0.0
    rules = RuleSet([Rule([0, 0], [1, 1], (0, 1), alpha=0.7), Rule([2, 2], [3, 3], (0, 1), alpha=0.5)])
    minima = [((0.5, 0.5), 0.0), ((2.5, 2.5), 0.0), ((9, 9), 0.0)]
    assert minima_hits(rules, minima) == 2
    assert minima_hits(rules, minima, 0.6) == 1


def test_union_volume_overlaps():
    space = get_problem("matyas").space  # [-10, 10]^2
    rs = RuleSet([Rule([-10, -10], [0, 0], (0, 1)), Rule([-5, -5], [0, 0], (0, 1))])
    p, se = union_volume_fraction(rs, space, 40000, seed=2)
    assert abs(p - 0.25) < 4 * se + 1e-12
    assert union_volume_fraction(RuleSet([]), space) == (0.0, 0.0)


def test_gt_mode_contract():
    obj = get_problem("booth")
    config = default_config("booth")
    rep, est = run_gt_mode(obj, config, n_samples=200)
    assert rep.mode == "ground-truth" and len(est.dataset_.X) == 150
    assert np.all(est.dataset_.std == 0.0)
    if rep.compactness:
        assert 0.0 <= rep.correctness <= 1.0 or np.isnan(rep.correctness)
    with pytest.raises(ValueError):
        run_gt_mode(get_problem("toy-hpo"), default_config("toy-hpo"))


def test_gp_mode_with_trace(booth_trace):
    obj = get_problem("booth")
    config = default_config("booth")
    rep, est, trace = run_gp_mode(obj, config, booth_trace)
    assert trace is booth_trace
    assert rep.compactness == len(est.rules_) and rep.n_rules_all == len(est.rules_all_)
    assert len(rep.rule_fidelities) == rep.compactness
    text = reports_to_csv([rep])
    assert text.splitlines()[0].startswith("problem,mode,seed,compactness")
    assert "booth" in summary_table([rep, rep])
    assert isinstance(EvalReport("p", "m", 0, 0, 0.0, 0.0).row(), dict)


def test_ablation_grid(booth_trace):
    assert len(ablation_configs()) == 16 and len(ablation_configs(full=True)) == 28
    config = default_config("booth")
    grid = run_clustering_ablation("booth", config, booth_trace)
    assert len(grid) == 16
    names = [r.name for r in grid.rows]
    assert len(set(names)) == 16
    assert grid.get("ward", "euclidean", "distance").pruning == "distance"
    for r in grid.rows:
        assert r.failed or r.n_high + r.n_moderate <= r.n_initial
    again = run_clustering_ablation("booth", config, booth_trace)
    assert again.to_csv() == grid.to_csv()
    with pytest.raises(ValueError):
        run_clustering_ablation("toy-hpo", default_config("toy-hpo"), booth_trace)
