"""Command-line contract: exit codes, emitted files, offline re-checking,
and the trace schema."""

import json

from vabcast.cli import main
from vabcast.harness import run_scenario
from vabcast.scenario import bundled
from vabcast.trace import parse_trace, read_trace, serialize_history


def run_cli(*argv):
    return main(list(argv))


def test_run_bundled_scenario_writes_artifacts(tmp_path, capsys):
    rc = run_cli("run", "--scenario", "steady_state", "--out", str(tmp_path))
    assert rc == 0
    for name in ("trace.jsonl", "metrics.json", "verdicts.json"):
        assert (tmp_path / name).exists()
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["steady_latency"]["max"] == 2
    verdicts = json.loads((tmp_path / "verdicts.json").read_text())
    assert verdicts["fail_count"] == 0
    history = read_trace(tmp_path / "trace.jsonl")
    assert len(history) > 0


def test_fig4_spo_has_zero_downtime_entry(tmp_path):
    rc = run_cli("run", "--scenario", "fig4_reconfig", "--out", str(tmp_path))
    assert rc == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert any(d["applicable"] and d["delay"] == 0 for d in metrics["downtime"])


def test_fig4_po_has_downtime_two_entry(tmp_path):
    rc = run_cli("run", "--scenario", "fig4_reconfig", "--mode", "po",
                 "--out", str(tmp_path))
    assert rc == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert any(d["applicable"] and d["delay"] == 2 for d in metrics["downtime"])


def test_malformed_scenario_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"mode": "vab"}')
    assert run_cli("run", "--scenario", str(bad), "--out", str(tmp_path)) == 2
    bad.write_text("not json at all")
    assert run_cli("run", "--scenario", str(bad), "--out", str(tmp_path)) == 2


def test_scenario_json_round_trip(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(bundled("zero_downtime").to_dict()))
    out = tmp_path / "out"
    assert run_cli("run", "--scenario", str(path), "--out", str(out)) == 0


def test_check_agrees_with_inline_run(tmp_path, capsys):
    rc = run_cli("run", "--scenario", "fig4_reconfig", "--out", str(tmp_path))
    assert rc == 0
    capsys.readouterr()
    rc = run_cli("check", "--trace", str(tmp_path / "trace.jsonl"), "--mode", "spo")
    assert rc == 0
    table = capsys.readouterr().out
    verdicts = json.loads((tmp_path / "verdicts.json").read_text())
    for row in verdicts["properties"]:
        if row["id"].startswith(("P1", "P2", "P3", "P4", "P6", "P7", "P9", "P10")):
            assert f"{row['id']:<20} {row['status']}" in table


def test_hand_edited_trace_fails_total_order(tmp_path, capsys):
    result = run_scenario(bundled("steady_state"))
    lines = serialize_history(result.history).splitlines()
    # swap the message contents of one process's first two deliveries
    idx = [n for n, line in enumerate(lines)
           if '"action":"deliver"' in line and '"proc":1' in line]
    a, b = idx[0], idx[1]
    obj_a, obj_b = json.loads(lines[a]), json.loads(lines[b])
    obj_a["msg"], obj_b["msg"] = obj_b["msg"], obj_a["msg"]
    lines[a] = json.dumps(obj_a, separators=(",", ":"))
    lines[b] = json.dumps(obj_b, separators=(",", ":"))
    path = tmp_path / "edited.jsonl"
    path.write_text("\n".join(lines) + "\n")
    rc = run_cli("check", "--trace", str(path))
    assert rc == 1
    assert "P3-TotalOrder        FAIL" in capsys.readouterr().out


def test_schema_violation_exits_2(tmp_path):
    path = tmp_path / "broken.jsonl"
    path.write_text('{"idx":5,"proc":1,"t":0,"action":"broadcast"}\n')
    assert run_cli("check", "--trace", str(path)) == 2


def test_empty_trace_passes_vacuously(tmp_path, capsys):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert run_cli("check", "--trace", str(path)) == 0
    out = capsys.readouterr().out
    assert "P2-Integrity         PASS" in out
    assert "NOT_EVALUATED" in out


def test_fuzz_zero_seeds_exits_clean(capsys):
    assert run_cli("fuzz", "--seeds", "0") == 0


def test_fuzz_small_campaign_clean(capsys):
    assert run_cli("fuzz", "--seeds", "20", "--mode", "spo") == 0


def test_fuzz_mutant_campaign_reports_violation(capsys):
    rc = run_cli("fuzz", "--seeds", "50", "--mode", "vab", "--kind", "mutant",
                 "--mutant", "skip-probing", "--stop-on-failure")
    assert rc == 1
    assert "first seed" in capsys.readouterr().out


def test_metrics_verb_prints_report(capsys):
    assert run_cli("metrics", "--scenario", "zero_downtime") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["downtime"][0]["delay"] == 0


def test_trace_round_trip_identity(tmp_path):
    for name in ("steady_state", "fig4_reconfig", "counter_demo"):
        text = serialize_history(run_scenario(bundled(name)).history)
        assert serialize_history(parse_trace(text)) == text


def test_run_exit_1_on_violation(tmp_path):
    rc = run_cli("run", "--scenario", "anomaly_vab", "--out", str(tmp_path))
    assert rc == 1
