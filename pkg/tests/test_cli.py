import json
import textwrap

import pytest
import yaml

from ionzne import cli
from ionzne.cli import ConfigError, load_config, main, parse_config, read_table
from ionzne.noisescale import FoldMethod

SWEEP = """\
experiment: tiny
command: sweep
pulse: discrete
noise: full
method: ms-four
schedule: [0, 1, 2, 3]
theta: {start: 0.0, stop: 0.2, step: 0.1}
shots: 50
seeds: [4]
"""


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def run(argv):
    return main([str(a) for a in argv])


# -- config validation

def test_valid_sweep_config(tmp_path):
    cfg = load_config(write(tmp_path, SWEEP))
    assert cfg.method is FoldMethod.MS_FOUR
    assert cfg.scale_schedule().factors == (1.0, 5.0, 9.0, 13.0)
    assert list(cfg.theta_grid()) == [0.0, 0.1, 0.2]


@pytest.mark.parametrize("bad,line", [
    (SWEEP.replace("ms-four", "ms-twice"), 5),
    (SWEEP.replace("shots: 50", "shots: -3"), 8),
    (SWEEP.replace("noise: full", "noise: loud"), 4),
    (SWEEP.replace("seeds: [4]", "seeds: [4]\nbogus: 1"), 10),
    (SWEEP.replace("step: 0.1", "step: 0"), 7),
])
def test_errors_carry_line_numbers(tmp_path, bad, line):
    with pytest.raises(ConfigError) as e:
        load_config(write(tmp_path, bad))
    assert f"cfg.yaml:{line}:" in str(e.value)


def test_empty_schedule_rejected(tmp_path):
    with pytest.raises(ConfigError, match="schedule"):
        load_config(write(tmp_path, SWEEP.replace("[0, 1, 2, 3]", "[]")))


def test_orders_must_fit_schedule(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, SWEEP + "orders: [1, 4]\n"))


def test_invalid_yaml(tmp_path):
    with pytest.raises(ConfigError, match=r"cfg.yaml:3: invalid YAML"):
        load_config(write(tmp_path, "experiment: x\ncommand: [sweep\n"))


def test_snapshot_roundtrip(tmp_path):
    cfg = load_config(write(tmp_path, SWEEP))
    again = parse_config(yaml.safe_load(yaml.safe_dump(cfg.snapshot())), source="snap")
    assert again.snapshot() == cfg.snapshot()


@pytest.mark.parametrize("figure", cli.FIGURES)
def test_every_preset_parses(figure):
    cfg = load_config(cli.preset_path(figure))
    assert cfg.experiment == figure
    cfg.scale_schedule()


def test_preset_numerics():
    fig4b = load_config(cli.preset_path("fig4b"))
    assert fig4b.method is FoldMethod.MS_AFTER and fig4b.shots == 2000
    fig8 = load_config(cli.preset_path("fig8"))
    assert fig8.scale_schedule().factors == (1.0, 2.0, 3.0, 5.0, 7.0)
    assert fig8.orders == (1, 2, 3, 4)
    assert load_config(cli.preset_path("fig6")).budgets == (7000, 14000, 28000, 56000)


# -- commands

def test_unknown_figure_exit_code(tmp_path, capsys):
    assert run(["reproduce", "fig99", "--out", tmp_path]) == cli.EXIT_VALIDATION
    assert "fig99" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path):
    p = write(tmp_path, SWEEP.replace("ms-four", "nope"))
    assert run(["sweep", "--config", p, "--out", tmp_path / "o"]) == cli.EXIT_VALIDATION


def test_command_mismatch(tmp_path):
    assert run(["vqe", "--config", write(tmp_path, SWEEP), "--out", tmp_path / "o"]) == cli.EXIT_VALIDATION


def test_budget_exit_code(tmp_path):
    cfg = write(tmp_path, """\
        experiment: broke
        command: vqe
        method: ms-after
        schedule: [0, 1]
        strategies: [a]
        budgets: [12]
        """)
    assert run(["vqe", "--config", cfg, "--out", tmp_path / "o"]) == cli.EXIT_BUDGET


def test_sweep_ms_four_columns_and_rerun(tmp_path):
    cfg = write(tmp_path, SWEEP)
    assert run(["sweep", "--config", cfg, "--out", tmp_path / "a"]) == 0
    assert run(["sweep", "--config", cfg, "--out", tmp_path / "b"]) == 0
    header, rows = read_table(tmp_path / "a" / "sweep.tsv")
    assert header == ["theta", "c", "mean", "sem"]
    assert sorted({float(r[1]) for r in rows}) == [1.0, 5.0, 9.0, 13.0]
    for name in ("sweep.tsv", "record.json", "config.yaml"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = yaml.safe_load((tmp_path / "a" / "manifest.yaml").read_text())
    assert manifest["wall_clock_seconds"] >= 0
    assert set(manifest["files"]) == {"sweep.tsv", "record.json"}


def test_record_snapshot_regenerates_table(tmp_path):
    assert run(["sweep", "--config", write(tmp_path, SWEEP), "--out", tmp_path / "a"]) == 0
    rec = json.loads((tmp_path / "a" / "record.json").read_text())
    snap = tmp_path / "snap.yaml"
    snap.write_text(yaml.safe_dump(rec["config"]))
    assert run(["sweep", "--config", snap, "--seed", rec["seed"], "--out", tmp_path / "b"]) == 0
    assert (tmp_path / "a" / "sweep.tsv").read_bytes() == (tmp_path / "b" / "sweep.tsv").read_bytes()


def test_seed_override_changes_numbers(tmp_path):
    cfg = write(tmp_path, SWEEP)
    run(["sweep", "--config", cfg, "--out", tmp_path / "a"])
    run(["sweep", "--config", cfg, "--seed", 5, "--out", tmp_path / "b"])
    assert (tmp_path / "a" / "sweep.tsv").read_bytes() != (tmp_path / "b" / "sweep.tsv").read_bytes()


def test_workers_do_not_change_output(tmp_path):
    cfg = write(tmp_path, SWEEP)
    run(["sweep", "--config", cfg, "--out", tmp_path / "a"])
    run(["sweep", "--config", cfg, "--workers", 2, "--out", tmp_path / "b"])
    assert (tmp_path / "a" / "sweep.tsv").read_bytes() == (tmp_path / "b" / "sweep.tsv").read_bytes()


def test_infinite_shots_sweep(tmp_path):
    assert run(["sweep", "--config", write(tmp_path, SWEEP), "--infinite-shots", "--out", tmp_path / "o"]) == 0
    _, rows = read_table(tmp_path / "o" / "sweep.tsv")
    assert all(float(r[3]) == 0.0 for r in rows)


def test_infinite_shots_rejected_for_vqe(tmp_path):
    assert run(["reproduce", "fig5", "--infinite-shots", "--out", tmp_path]) == cli.EXIT_VALIDATION


def test_config_dir_env(tmp_path, monkeypatch):
    d = tmp_path / "configs"
    d.mkdir()
    write(d, SWEEP, "tiny.yaml")
    monkeypatch.setenv(cli.CONFIG_DIR_ENV, str(d))
    assert run(["sweep", "--config", "tiny", "--out", tmp_path / "o"]) == 0


def test_calibrate_reports(tmp_path):
    assert run(["calibrate", "--out", tmp_path / "full"]) == 0
    _, rows = read_table(tmp_path / "full" / "calibration.tsv")
    fid = {r[0]: float(r[2]) for r in rows}
    for gate, target in cli.FIDELITY_TARGETS.items():
        assert fid[gate] == pytest.approx(target, abs=0.005)
    assert run(["calibrate", "--noise", "noiseless", "--out", tmp_path / "clean"]) == 0
    _, rows = read_table(tmp_path / "clean" / "calibration.tsv")
    assert all(float(r[2]) >= 0.9999 for r in rows)
    assert run(["calibrate", "--noise", "dagger-overrotation", "--out", tmp_path / "b"]) == 0
    _, rows = read_table(tmp_path / "b" / "calibration.tsv")
    assert {r[0]: float(r[2]) for r in rows}["MS*MSInverse"] < fid["MS*MSInverse"]


def test_vqe_strategy_d_records(tmp_path):
    cfg = write(tmp_path, """\
        experiment: small
        command: vqe
        method: ms-after
        schedule: [0, 1, 2, 3]
        strategies: [c, d]
        budgets: [14000]
        seeds: {start: 0, count: 2}
        """)
    assert run(["vqe", "--config", cfg, "--out", tmp_path / "o"]) == 0
    rec = json.loads((tmp_path / "o" / "records" / "d_14000_seed1.json").read_text())
    assert rec["result"]["optimization_order"] == 1 and rec["result"]["final_order"] == 3
    header, agg = read_table(tmp_path / "o" / "aggregate.tsv")
    assert header == ["strategy", "budget", "seeds", "mean_eps", "se_eps", "mean_sigma"]
    assert [(r[0], int(r[2])) for r in agg] == [("c", 2), ("d", 2)]


def test_reproduce_fig8(tmp_path):
    assert run(["reproduce", "fig8", "--out", tmp_path]) == 0
    _, fits = read_table(tmp_path / "fits.tsv")
    assert [int(r[1]) for r in fits] == [0, 1, 2, 3, 4]
    _, pts = read_table(tmp_path / "points.tsv")
    assert [float(r[2]) for r in pts] == [1.0, 2.0, 3.0, 5.0, 7.0]
