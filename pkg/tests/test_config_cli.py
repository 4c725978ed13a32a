import json

import numpy as np
import pytest

from bbm_edge import campaign, cli
from bbm_edge.campaign import (
    RunManifest, cached_replicas, read_csv, run_id, run_replicas, stream_id, write_csv,
)
from bbm_edge.config import ConfigError, RunConfig, from_mapping, load_config, parse_text, save_config
from bbm_edge.engine import CapacityError, GenealogyTree
from bbm_edge.extremal import SummaryConfig


def test_default_config_is_valid():
    c = RunConfig()
    assert c.law.is_binary and c.all_horizons == (10.0,)


@pytest.mark.parametrize("values, message", [
    ({"alpha": 0.6}, "0<alpha<1/2"),
    ({"beta": 0.3}, "1/2<beta<1"),
    ({"gamma": 0.7}, "gamma must lie in"),
    ({"offspring": "1:0.6,2:0.2,3:0.2"}, "normalization"),
    ({"experiment": "genealogy", "t": 9.0, "r": "1,3"}, "t > 3r"),
    ({"experiment": "tube", "t": 9.0, "r": "5"}, "t > 2r"),
    ({"prune": "yes", "prune_margin": 5}, ">= 10"),
    ({"grid_dt": 0.0}, "grid_dt"),
    ({"window": "0:-2"}, "lo <= hi"),
    ({"colour": "red"}, "unknown config keys"),
    ({"replicas": "many"}, "bad value"),
])
def test_config_errors_name_the_constraint(values, message):
    with pytest.raises(ConfigError, match=message):
        from_mapping(values)


def test_envelope_modes_accept_t_between_2r_and_3r():
    c = from_mapping({"experiment": "envelopes", "t": 12.0, "r": "1,3,5"})
    assert c.r == (1.0, 3.0, 5.0)


def test_parse_text_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# demo\nt = 6\nr = 1, 2  # list\nwindow = -3:0\nprune = true\n")
    c = load_config(path, {"seed": 9})
    assert (c.t, c.r, c.window, c.prune, c.seed) == (6.0, (1.0, 2.0), (-3.0, 0.0), True, 9)
    with pytest.raises(ConfigError, match="key = value"):
        parse_text("t 6")
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.cfg")


def test_config_round_trip(tmp_path):
    c = from_mapping({"experiment": "gibbs", "t": 11.0, "gibbs_beta": 3.0, "levels": "-1,-2", "jobs": 3})
    assert load_config(save_config(c, tmp_path / "c.json")) == c


def test_stream_ids_separate_horizons():
    assert stream_id(10.0, 5) != stream_id(12.0, 5)
    assert stream_id(10.0, 5) == 10_000 * 2**32 + 5
    with pytest.raises(ValueError):
        stream_id(1.0, 2**32)


def test_replicas_independent_of_jobs():
    one = run_replicas(3.0, 12, 7, jobs=1)
    two = run_replicas(3.0, 12, 7, jobs=2, chunk=5)
    assert one == two and len(one) == 12


def test_cache_round_trip(tmp_path):
    cfg = SummaryConfig(gibbs_pairs=5)
    first = cached_replicas(3.0, 6, 1, summary=cfg, cache_dir=tmp_path)
    assert len(list(tmp_path.glob("replicas-*.pkl"))) == 1
    assert cached_replicas(3.0, 6, 1, summary=cfg, cache_dir=tmp_path) == first
    cached_replicas(3.0, 6, 2, summary=cfg, cache_dir=tmp_path)
    assert len(list(tmp_path.glob("replicas-*.pkl"))) == 2


def test_run_id_ignores_jobs():
    a = RunConfig(jobs=1).to_dict()
    b = RunConfig(jobs=4).to_dict()
    assert run_id(a) == run_id(b)
    assert run_id(a) != run_id(RunConfig(seed=1).to_dict())


def test_csv_and_manifest(tmp_path):
    path = write_csv(tmp_path / "x.csv", ["a", "b"], [[1, 0.5], [2, True]], "abc")
    rows = read_csv(path)
    assert rows == [{"a": "1", "b": "0.5", "run_id": "abc"}, {"a": "2", "b": "1", "run_id": "abc"}]
    m = RunManifest(RunConfig().to_dict(), 0, 100, [10.0])
    m.record(path)
    m.save(tmp_path)
    back = RunManifest.load(tmp_path)
    assert back.to_dict() == m.to_dict()
    assert back.verify(tmp_path) == {"x.csv": True}
    path.write_text("tampered\n")
    assert back.verify(tmp_path) == {"x.csv": False}


def _digests(out):
    return json.loads((out / "manifest.json").read_text())["outputs"]


def test_cli_simulate_is_reproducible(tmp_path, capsys):
    args = ["simulate", "--t", "3", "--replicas", "30", "--seed", "42", "--offspring", "binary"]
    assert cli.main([*args, "--out", str(tmp_path / "a")]) == 0
    assert cli.main([*args, "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    assert _digests(tmp_path / "a") == _digests(tmp_path / "b")
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 42 and manifest["replicas"] == 30
    assert manifest["rng_algorithm"].startswith("philox")
    rows = read_csv(tmp_path / "a" / "replicas.csv")
    assert len(rows) == 30 and rows[0]["run_id"] == manifest["run_id"]
    assert "PASS  simulate:mean_population_t3" in capsys.readouterr().out


def test_cli_dump_trees(tmp_path):
    out = tmp_path / "d"
    assert cli.main(["simulate", "--t", "2", "--replicas", "2", "--dump-trees", "1", "--out", str(out)]) == 0
    tree = GenealogyTree.load(out, "tree_t2_0", t=2.0)
    assert tree.n_alive >= 1


def test_cli_negative_window_value(tmp_path):
    out = tmp_path / "g"
    code = cli.main(["genealogy", "--t", "7", "--replicas", "20", "--window", "-3:0", "--r", "1,2", "--out", str(out)])
    assert code == 0
    assert json.loads((out / "manifest.json").read_text())["config"]["window"] == [-3.0, 0.0]


@pytest.mark.parametrize("argv", [
    ["simulate", "--bogus", "1"],
    ["nonsense"],
    ["envelopes", "--alpha", "0.6"],
    ["simulate", "--offspring", "1:0.6,2:0.2,3:0.2"],
    ["genealogy", "--t", "6", "--r", "2"],
    ["simulate", "--config", "/no/such/file"],
])
def test_cli_config_errors_exit_2(argv, capsys):
    assert cli.main(argv) == cli.EXIT_CONFIG


def test_cli_capacity_error_exits_3(monkeypatch, tmp_path):
    def boom(*args, **kwargs):
        raise CapacityError("too many particles")

    monkeypatch.setattr(cli, "run_experiment", boom)
    assert cli.main(["simulate", "--out", str(tmp_path)]) == cli.EXIT_CAPACITY


def test_cli_check_failure_exits_4(tmp_path):
    # 20 replicas cannot show a decreasing trend over r
    argv = ["genealogy", "--t", "7", "--replicas", "20", "--r", "1,2", "--out", str(tmp_path / "g"), "--check"]
    assert cli.main(argv) == cli.EXIT_CHECK


def test_cli_config_file_and_report(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(campaign.OUT_ENV, str(tmp_path / "runs"))
    cfg = tmp_path / "run.cfg"
    cfg.write_text("t = 2\nreplicas = 10\nseed = 3\n")
    assert cli.main(["simulate", "--config", str(cfg), "--replicas", "12"]) == 0
    (run_dir,) = (tmp_path / "runs").iterdir()
    assert json.loads((run_dir / "manifest.json").read_text())["replicas"] == 12
    assert cli.main(["report"]) == 0
    report = json.loads((tmp_path / "runs" / "report.json").read_text())
    assert any(key.endswith("mean_population_t2") for key in report["checks"])
