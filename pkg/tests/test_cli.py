import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from explainkit.cli import run
from explainkit.cli.config import Option, read_config_file, resolve
from explainkit.cli.reasons import reason_codes
from explainkit.data import load_csv
from explainkit.errors import DataError
from explainkit.model import GbmModel
from explainkit.shapley import ShapleyExplanation, summarize


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run(["simulate", "--rows", "1500", "--out-dir", str(d)]) == 0
    assert run(["train", "--data", str(d / "sim.csv"), "--max-rounds", "15", "--max-depth", "3",
                "--out-dir", str(d), "--out", "model.json"]) == 0
    return d


def call(workdir, *args):
    return run(list(args) + ["--out-dir", str(workdir)])


def test_simulate_schema(workdir):
    with open(workdir / "sim.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [f"num{i}" for i in range(1, 13)] + ["label"]
    assert len(rows) == 1501


def test_train_outputs(workdir):
    metrics = json.loads((workdir / "metrics.json").read_text())
    assert 0.5 < metrics["valid_auc"] <= 1
    assert metrics["n_valid"] == 450
    model = GbmModel.load(workdir / "model.json")
    assert model.feature_names == tuple(f"num{i}" for i in range(1, 13))


def test_reproducible_bytes(workdir, tmp_path):
    assert run(["train", "--data", str(workdir / "sim.csv"), "--max-rounds", "15", "--max-depth", "3",
                "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "model.json").read_bytes() == (workdir / "model.json").read_bytes()
    assert (tmp_path / "metrics.json").read_bytes() == (workdir / "metrics.json").read_bytes()
    for d in (workdir, tmp_path):
        assert run(["shap", "--model", str(workdir / "model.json"), "--data", str(workdir / "sim.csv"),
                    "--row", "4", "--method", "sampled", "--permutations", "50", "--out-dir", str(d),
                    "--out", "s.json"]) == 0
    assert (tmp_path / "s.json").read_bytes() == (workdir / "s.json").read_bytes()


def test_explainers_write_outputs(workdir):
    m, data = str(workdir / "model.json"), str(workdir / "sim.csv")
    assert call(workdir, "surrogate", "--model", m, "--data", data, "--depth", "2") == 0
    assert (workdir / "surrogate.dot").read_text().startswith("digraph")
    assert call(workdir, "pd", "--model", m, "--data", data, "--feature", "num9", "--feature2", "num8",
                "--grid-points", "5") == 0
    pd_doc = json.loads((workdir / "pd.json").read_text())
    assert len(pd_doc["pd2"]["values"]) == len(pd_doc["grid"])
    assert call(workdir, "ice", "--model", m, "--data", data, "--feature", "num1", "--rows", "0,5,9") == 0
    with open(workdir / "ice.csv") as fh:
        head = next(csv.reader(fh))
    assert head == ["feature", "grid_value", "series_id", "value"]
    for name in ("pd.svg", "ice.svg"):
        ET.parse(workdir / name)
    assert call(workdir, "lime", "--model", m, "--data", data, "--row", "2", "--samples", "500",
                "--repeats", "2") == 0
    lime_doc = json.loads((workdir / "lime.json").read_text())
    assert lime_doc["config"]["seed"] == 12345 and "contribution_std" in lime_doc


def test_summary_matches_library(workdir):
    m, data = str(workdir / "model.json"), str(workdir / "sim.csv")
    assert call(workdir, "summary", "--model", m, "--data", data, "--method", "exact", "--budget", "100") == 0
    doc = json.loads((workdir / "summary.json").read_text())
    model = GbmModel.load(m)
    rep = summarize(model, load_csv(data, target="label"), "exact", 100, 12345)
    assert doc["ordering"] == [rep.feature_names[j] for j in rep.ordering]
    ET.parse(workdir / "summary.svg")


def test_compare_table(workdir, capsys):
    assert call(workdir, "compare", "--model", str(workdir / "model.json"), "--data", str(workdir / "sim.csv"),
                "--row", "7", "--permutations", "200") == 0
    doc = json.loads((workdir / "compare.json").read_text())
    assert set(doc["features"][0]) == {"feature", "value", "exact", "sampled", "path"}
    assert set(doc["max_discrepancy"]) == {"exact_vs_sampled", "exact_vs_path"}
    assert "exact\tsampled\tpath" in capsys.readouterr().out


def test_reasons_command(workdir, tmp_path):
    book = tmp_path / "book.json"
    book.write_text(json.dumps({"num8": {"1": "one"}}))
    assert call(workdir, "reasons", "--model", str(workdir / "model.json"), "--data", str(workdir / "sim.csv"),
                "--row", "3", "--k", "2", "--codebook", str(book)) == 0
    doc = json.loads((workdir / "reasons.json").read_text())
    assert [c["rank"] for c in doc["codes"]] == list(range(1, len(doc["codes"]) + 1))


def test_errors_exit_nonzero(workdir, capsys):
    assert call(workdir, "summary", "--model", str(workdir / "model.json"), "--data", "nope.csv") == 1
    assert "no such file" in capsys.readouterr().err
    assert call(workdir, "pd", "--model", str(workdir / "model.json"), "--data", str(workdir / "sim.csv")) == 1
    with pytest.raises(SystemExit) as exc:
        run(["explode"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        run(["simulate", "--bogus", "1"])


def test_config_precedence(workdir, tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# simulation settings\nrows = 40\nseed = 3  # from file\n")
    monkeypatch.setenv("EXPLAINKIT_SEED", "99")
    assert run(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    echo = json.loads((tmp_path / "simulate.config.json").read_text())
    assert (echo["rows"], echo["seed"]) == (40, 3)
    assert run(["simulate", "--config", str(cfg), "--seed", "5", "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "simulate.config.json").read_text())["seed"] == 5
    cfg.write_text("rows = 40\n")
    assert run(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "simulate.config.json").read_text())["seed"] == 99
    cfg.write_text("colour = blue\n")
    assert run(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 1


def test_resolve_types():
    opts = [Option("rows", int, 10), Option("name", str, "x")]
    out = resolve(opts, {"rows": None}, {"rows": "7"}, environ={})
    assert out == {"rows": 7, "name": "x", "seed": 12345}
    with pytest.raises(DataError):
        resolve(opts, {}, {"rows": "seven"}, environ={})


def test_config_file_syntax(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("a-b = 1\n\n# note\nc=two words\n")
    assert read_config_file(p) == {"a_b": "1", "c": "two words"}
    p.write_text("just text\n")
    with pytest.raises(DataError):
        read_config_file(p)


def explanation(phi):
    phi = np.asarray(phi, dtype=float)
    return ShapleyExplanation(phi, 0.0, float(phi.sum()), np.zeros(phi.size, bool), "exact")


def test_reason_code_cases():
    names = ["a", "b", "c"]
    codes, short = reason_codes(explanation([-1, -2, -0.5]), [1, 2, 3], names, 3)
    assert codes == [] and short
    codes, short = reason_codes(explanation([-1, 0.4, -0.5]), [1, 2, 3], names, 1)
    assert [(c.rank, c.feature) for c in codes] == [(1, "b")] and not short
    assert codes[0].text == "feature b is 2 (contribution +0.4)"
    codes, _ = reason_codes(explanation([0.1, 0.4, 0.0]), [2, 2, 3], names, 2, {"a": {"2": "two months late"}})
    assert codes[1].text == "feature a is 2 (two months late) (contribution +0.1)"


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=10), st.floats(0.01, 100), st.integers(1, 5))
def test_reason_codes_scale_invariant(phi, c, k):
    x = np.arange(len(phi), dtype=float)
    names = [f"f{j}" for j in range(len(phi))]
    a, _ = reason_codes(explanation(phi), x, names, k)
    b, _ = reason_codes(explanation(np.array(phi) * c), x, names, k)
    if all(p * c > 0 for p in phi if p > 0):
        assert [(r.rank, r.feature) for r in a] == [(r.rank, r.feature) for r in b]
