import statistics

import pytest

from mthfl.cli import (ROUND_COLUMNS, SweepRow, Trace, compare, compare_traces, crossover_round,
                       main, read_sweep, read_trace, sweep_clients, sweep_csv)
from mthfl.config import load_preset, parse_config, preset_text
from mthfl.errors import SchemaError

HEADER = ("round,global_loss,global_accuracy,selected,delivered,failed,"
          "round_comm_delay_s,round_comp_delay_s,cumulative_delay_s\n")


def small_text(name="mt-hfl", rounds=3, clients=20):
    out = []
    for line in preset_text(name).splitlines():
        key = line.split("=")[0].strip()
        value = {"topology.num_clients": clients, "data.n": 2000,
                 "training.max_rounds": rounds}.get(key)
        out.append(line if value is None else f"{key} = {value}")
    return "\n".join(out) + "\n"


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(small_text())
    return path


def test_run_writes_round_zero_plus_rounds(tmp_path, small_cfg):
    assert main(["--out-dir", str(tmp_path), "run", str(small_cfg)]) == 0
    lines = (tmp_path / "mt-hfl.csv").read_text().splitlines(keepends=True)
    assert len(lines) == 1 + 4
    assert lines[0] == HEADER
    assert ",".join(ROUND_COLUMNS) + "\n" == HEADER
    assert all(l.endswith("\n") and not l.endswith("\r\n") for l in lines)


def test_rerun_is_byte_identical_and_seed_sensitive(tmp_path, small_cfg):
    outs = []
    for i, seed in enumerate(["1", "1", "2"]):
        d = tmp_path / str(i)
        assert main(["--seed", seed, "--out-dir", str(d), "run", str(small_cfg)]) == 0
        outs.append((d / "mt-hfl.csv").read_bytes())
    assert outs[0] == outs[1] != outs[2]


def test_run_reports_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(small_text().replace("data.alpha = 0.1", "data.alpha = -1"))
    assert main(["--out-dir", str(tmp_path), "run", str(bad)]) == 2
    assert "data.alpha" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg")]) == 2


def test_sweep_with_zero_target_costs_one_round():
    cfg = parse_config(small_text(rounds=5)).with_overrides(training={"target_accuracy": 0.0})
    (row,) = sweep_clients([cfg], [20])
    assert row.reached and row.rounds_to_target == 1
    one_round = sweep_clients([cfg.with_overrides(training={"max_rounds": 1})], [20])[0]
    assert row.delay_to_target_s == one_round.delay_to_target_s > 0


def test_sweep_rows_for_every_scenario_and_count(tmp_path):
    a, b = tmp_path / "a.cfg", tmp_path / "b.cfg"
    a.write_text(small_text("mt-hfl", rounds=2))
    b.write_text(small_text("terrestrial-hfl", rounds=2))
    assert main(["--out-dir", str(tmp_path), "sweep", str(a), str(b), "--clients", "5,10,30",
                 "--relative-target", "0.9"]) == 0
    rows = read_sweep(tmp_path / "sweep.csv")
    assert [(r.scenario, r.clients) for r in rows] == [
        (s, c) for c in (5, 10, 30) for s in ("mt-hfl", "terrestrial-hfl")]
    infeasible = [r for r in rows if r.clients == 30]
    assert all(not r.reached and r.delay_to_target_s is None for r in infeasible)


def test_sweep_csv_round_trip(tmp_path):
    rows = [SweepRow("a", 5, 3, 1.5, True), SweepRow("b", 5, None, None, False)]
    path = tmp_path / "s.csv"
    path.write_text(sweep_csv(rows))
    assert read_sweep(path) == rows
    assert path.read_text().splitlines()[2] == "b,5,,,false"


def _write_trace(path, accs, delays=None):
    delays = delays or [float(i) for i in range(len(accs))]
    rows = [f"{i},1,{a},1,1,0,0.5,0.5,{d}" for i, (a, d) in enumerate(zip(accs, delays))]
    path.write_text(HEADER + "\n".join(rows) + "\n")
    return path


def test_compare_with_itself(tmp_path, small_cfg):
    main(["--out-dir", str(tmp_path), "run", str(small_cfg)])
    csv = tmp_path / "mt-hfl.csv"
    rep = compare(csv, csv)
    assert rep.accuracy_gap_pp == 0 and rep.accuracy_gap_relative == 0
    assert rep.delay_ratio == 1.0
    assert main(["--out-dir", str(tmp_path), "compare", str(csv), str(csv)]) == 0
    text = (tmp_path / "comparison.txt").read_text()
    assert "accuracy_gap_pp=0\n" in text and "delay_ratio=1\n" in text


def test_crossover_on_hand_built_traces(tmp_path):
    a = _write_trace(tmp_path / "a.csv", [0.2, 0.4, 0.6])
    b = _write_trace(tmp_path / "b.csv", [0.3, 0.35, 0.5])
    assert compare(a, b).crossover_round == 1
    assert crossover_round([0.1, 0.1, 0.3, 0.9], [0.1, 0.2, 0.3, 0.1], [0, 1, 2, 3]) == 2
    assert crossover_round([0.5, 0.1], [0.1, 0.2], [0, 1]) is None


def test_compare_gaps_and_ratio():
    a = Trace([0, 1, 2], [0.1, 0.5, 0.8], [0.0, 2.0, 4.0])
    b = Trace([0, 1, 2], [0.1, 0.7, 0.6], [0.0, 3.0, 6.0])
    rep = compare_traces(a, b)
    assert rep.accuracy_gap_pp == pytest.approx(20.0)
    assert rep.target_accuracy == pytest.approx(0.54)
    assert (rep.delay_to_target_a_s, rep.delay_to_target_b_s) == (4.0, 3.0)
    assert rep.delay_ratio == 0.75


@pytest.mark.parametrize("body", ["", "round,acc\n0,1\n", HEADER, HEADER + "1,x,1,1,1,0,1,1,1\n",
                                  HEADER + "1,1,1,1,1,0,1,1,1\n0,1,1,1,1,0,1,1,1\n"])
def test_schema_errors(tmp_path, body):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(SchemaError):
        read_trace(path)


@pytest.mark.slow
def test_delay_to_target_non_increasing_in_count_without_outage():
    cfgs = [load_preset(n).with_overrides(channel={"nlos_outage": 0.0})
            for n in ("mt-hfl", "terrestrial-hfl")]
    delays = {}
    for seed in range(5):
        for row in sweep_clients([c.with_seed(seed) for c in cfgs], [50, 100, 200], 0.9):
            delays.setdefault(row.scenario, {}).setdefault(row.clients, []).append(
                row.delay_to_target_s)
    for name, by_count in delays.items():
        medians = [statistics.median(by_count[c]) for c in (50, 100, 200)]
        print(name, medians)
        assert medians == sorted(medians, reverse=True), (name, medians)
