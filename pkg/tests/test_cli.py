import json

import pytest

from adhoc_cloud.cli import main
from adhoc_cloud.trace import load_trace

SMALL = """\
hosts:
  count: 6
workload:
  jobs: 4
  total_work: 600
churn:
  window: 1800
  mtbf: 1800
outputs:
  figures: {figures}
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(SMALL.format(figures="false"))
    return path


def test_simulate_writes_a_complete_run_directory(tmp_path, config, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(config), "--seed", "3", "--out", str(out)]) == 0
    for name in ("events.tsv", "metrics.json", "metrics.txt", "config.yaml", "trace.txt"):
        assert (out / name).exists(), name
    assert "completion_rate" in capsys.readouterr().out
    summary = json.loads((out / "metrics.json").read_text())
    assert summary["jobs_submitted"] == 4


def test_run_directory_replays_itself(tmp_path, config):
    first, second = tmp_path / "a", tmp_path / "b"
    main(["simulate", "--config", str(config), "--seed", "5", "--out", str(first)])
    main(["simulate", "--config", str(first / "config.yaml"), "--out", str(second)])
    assert (first / "events.tsv").read_bytes() == (second / "events.tsv").read_bytes()
    assert (first / "metrics.json").read_bytes() == (second / "metrics.json").read_bytes()


def test_replication_off_override(tmp_path, config):
    out = tmp_path / "off"
    assert main(["simulate", "--config", str(config), "--replication", "off",
                 "--out", str(out)]) == 0
    assert "replication: false" in (out / "config.yaml").read_text()
    assert "SnapshotCaptured" not in (out / "events.tsv").read_text()


def test_figures_are_rendered(tmp_path):
    path = tmp_path / "fig.yaml"
    path.write_text(SMALL.format(figures="true"))
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(path), "--out", str(out)]) == 0
    assert (out / "reliability.png").read_bytes()[:4] == b"\x89PNG"
    assert (out / "completions.png").exists()


def test_missing_trace_file_names_the_path(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text("churn:\n  trace: missing-trace.txt\n")
    assert main(["simulate", "--config", str(path)]) == 1
    assert "missing-trace.txt" in capsys.readouterr().err


def test_invalid_config_exits_1(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("timing:\n  poll_interval: -5\n")
    assert main(["simulate", "--config", str(path)]) == 1
    assert main(["simulate", "--config", str(tmp_path / "absent.yaml")]) == 1


def test_bad_flag_value_exits_1(config):
    assert main(["simulate", "--config", str(config), "--replication", "maybe"]) == 1


def test_runtime_failure_exits_2(tmp_path, config, monkeypatch):
    import adhoc_cloud.cli as cli

    def boom(*a, **k):
        raise RuntimeError("engine exploded")

    monkeypatch.setattr(cli, "run_once", boom)
    assert main(["simulate", "--config", str(config), "--out", str(tmp_path / "x")]) == 2


def test_sweep_two_policies(tmp_path, config, capsys):
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", str(config), "--seeds", "1..10",
                 "--grid", "replication=on,off", "--out", str(out)])
    assert code == 0
    rows = (out / "sweep.tsv").read_text().splitlines()
    assert len(rows) == 3  # header + 2 points
    assert len((out / "manifest.jsonl").read_text().splitlines()) == 20
    assert "mean_completion_rate" in capsys.readouterr().out


def test_sweep_without_grid_is_rejected(tmp_path, config):
    assert main(["sweep", "--config", str(config), "--seeds", "1..2",
                 "--out", str(tmp_path / "s")]) == 1
    assert main(["sweep", "--config", str(config), "--seeds", "1..2", "--grid", "threshold=",
                 "--out", str(tmp_path / "s")]) == 1


def test_gen_trace_is_valid_and_repeatable(tmp_path):
    args = ["gen-trace", "--hosts", "30", "--horizon", "3600", "--mtbf", "7200",
            "--mttr", "300", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a.txt")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.txt")]) == 0
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    assert len(load_trace(tmp_path / "a.txt").hosts) == 30


def test_gen_trace_rejects_zero_mtbf(tmp_path):
    assert main(["gen-trace", "--hosts", "3", "--horizon", "100", "--mtbf", "0",
                 "--mttr", "10", "--seed", "1", "--out", str(tmp_path / "t.txt")]) == 1
