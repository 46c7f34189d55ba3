import json
import re

import numpy as np
import pytest

from tntrules import cli
from tntrules.bayes_opt import BOTrace, run_bo
from tntrules.dataset import ExplanationDataset
from tntrules.evaluation import union_volume_fraction
from tntrules.gp import GPFitError
from tntrules.problems import SearchSpace, default_config, get_problem
from tntrules.report import ARTIFACTS, RunManifest, render_svg, run_pipeline
from tntrules.rules import Rule, RuleSet

FAST = "bo_iterations = 12\nn_explain = 80\nfidelity_samples = 100\n"


@pytest.fixture(scope="module")
def trace_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("trace") / "trace.json"
    run_bo(get_problem("booth"), 12, seed=0).save(path)
    return path


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.cfg"
    path.write_text(FAST)
    return path


def _svg_data():
    space = SearchSpace.from_bounds([[0, 10], [0, 10]])
    X = np.array([[1.0, 1.0], [9.0, 9.0], [5.0, 5.0]])
    return ExplanationDataset(X, [0.0, 1.0, 0.5], [0.1, 0.1, 0.1], space)


def test_svg_colors_by_interestingness():
    rs = RuleSet([Rule([0, 0], [2, 2], (0, 1), alpha=0.9), Rule([3, 3], [4, 4], (0, 1), alpha=0.6),
                  Rule([5, 5], [6, 6], (0, 1), alpha=0.45), Rule([7, 7], [8, 8], (0, 1), alpha=0.2)])
    svg = render_svg(rs, _svg_data(), known_minima=[((1, 1), 0.0)], incumbent=[5, 5])
    rects = re.findall(r'<rect class="rule"[^>]*stroke="(\w+)"', svg)
    assert sorted(rects) == ["red", "red", "yellow"]
    assert svg.count('class="sample"') == 3 and svg.count('class="minimum"') == 1
    assert svg.count('class="incumbent"') == 1


def test_svg_empty_ruleset_and_pixel_mapping():
    svg = render_svg(RuleSet([]), _svg_data(), size=480)
    assert 'class="rule"' not in svg and svg.strip().endswith("</svg>")
    # (1, 1) maps to 40 + 0.1 * 400 horizontally and 40 + 0.9 * 400 vertically
    assert 'cx="80.00" cy="400.00"' in svg
    rs = RuleSet([Rule([0, 0], [10, 10], (0, 1), alpha=1.0)])
    assert 'x="40.00" y="40.00" width="400.00" height="400.00"' in render_svg(rs, _svg_data())


def test_pipeline_artifacts_and_determinism(tmp_path, trace_file):
    trace = BOTrace.load(trace_file)
    config = default_config("booth", n_explain=80, fidelity_samples=100)
    m1 = run_pipeline(config, tmp_path / "a", "fixed", trace)
    m2 = run_pipeline(config, tmp_path / "b", "fixed", trace)
    assert set(ARTIFACTS) <= set(m1.files)
    for name in ("rules.json", "rules.txt", "dataset.csv", "linkage.csv", "sensitivity.csv", "plot.svg"):
        assert (tmp_path / "a" / name).read_text() == (tmp_path / "b" / name).read_text()
    assert m1.stats == m2.stats
    back = RunManifest.from_json((tmp_path / "a" / "manifest.json").read_text())
    assert back.stats["n_rules"] == m1.stats["n_rules"] and back.error is None
    rules = RuleSet.from_json((tmp_path / "a" / "rules.json").read_text())
    union, _ = union_volume_fraction(rules, get_problem("booth").space, seed=config.seed)
    assert union == m1.stats["volume_union_fraction"]
    assert m1.stats["volume_union_fraction"] <= m1.stats["volume_sum_fraction"] + 3 * m1.stats["volume_union_se"]


def test_pipeline_pareto_mode(tmp_path, trace_file):
    config = default_config("booth", n_explain=80, fidelity_samples=100)
    m = run_pipeline(config, tmp_path, "pareto-tune", BOTrace.load(trace_file), generations=3, population=8)
    assert "ts_front.csv" in m.files and 0 <= m.stats["chosen_t_s"] <= 1
    with pytest.raises(ValueError):
        run_pipeline(config, tmp_path, "bogus")


def test_cli_commands(tmp_path, trace_file, fast_config, capsys):
    out = str(tmp_path)
    assert cli.main(["optimize", "--config", str(fast_config), "--out-dir", out]) == 0
    assert json.loads((tmp_path / "trace.json").read_text())
    assert cli.main(["explain", "--trace", str(trace_file), "--config", str(fast_config), "--out-dir", out]) == 0
    assert (tmp_path / "rules.json").exists() and (tmp_path / "linkage.csv").exists()
    assert cli.main(["tune-ts", "--trace", str(trace_file), "--config", str(fast_config), "--out-dir", out,
                     "--generations", "2", "--pop", "6"]) == 0
    assert (tmp_path / "ts_front.csv").read_text().startswith("t_s,supp,rel,nrules")
    assert cli.main(["plot", "--rules", str(tmp_path / "rules.json"), "--dataset", str(tmp_path / "dataset.csv"),
                     "--out-dir", out]) == 0
    assert (tmp_path / "plot.svg").read_text().startswith("<svg")
    assert cli.main(["--seed", "1", "report", "--trace", str(trace_file), "--config", str(fast_config),
                     "--out-dir", str(tmp_path / "rep")]) == 0
    assert "retained" in capsys.readouterr().out


def test_cli_eval_and_expectations(tmp_path, fast_config):
    ok = tmp_path / "ok.txt"
    ok.write_text("ground-truth:completeness >= 0\n")
    args = ["eval", "--config", str(fast_config), "--out-dir", str(tmp_path), "--seeds", "1", "--modes", "gt"]
    assert cli.main(args + ["--expect", str(ok)]) == 0
    assert (tmp_path / "report.csv").exists() and (tmp_path / "summary.txt").exists()
    bad = tmp_path / "bad.txt"
    bad.write_text("ground-truth:compactness >= 1000  # impossible\n")
    assert cli.main(args + ["--expect", str(bad)]) == cli.EXIT_ACCEPTANCE
    junk = tmp_path / "junk.txt"
    junk.write_text("nonsense\n")
    assert cli.main(args + ["--expect", str(junk)]) == cli.EXIT_CONFIG


def test_cli_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("t_s = 7\n")
    assert cli.main(["optimize", "--config", str(bad), "--out-dir", str(tmp_path)]) == cli.EXIT_CONFIG
    assert cli.main(["explain", "--trace", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG
    with pytest.raises(SystemExit):
        cli.main(["nope"])


def test_cli_numerical_failure(tmp_path, fast_config, monkeypatch):
    def boom(*a, **k):
        raise GPFitError("indefinite")

    monkeypatch.setattr(cli, "run_bo", boom)
    assert cli.main(["optimize", "--config", str(fast_config), "--out-dir", str(tmp_path)]) == cli.EXIT_NUMERIC
    monkeypatch.setattr("tntrules.report.run_bo", boom)
    rc = cli.main(["report", "--config", str(fast_config), "--out-dir", str(tmp_path)])
    assert rc == cli.EXIT_NUMERIC
    assert "optimize" in json.loads((tmp_path / "manifest.json").read_text())["error"]
