import io
import json
from pathlib import Path

import pytest

from drrnlog import cli
from drrnlog.engine import bundled_game
from drrnlog.report import ScoreCell, ScoreTable, build_table, window_curve

FIXTURES = Path(__file__).parent / "fixtures"
FAST = ["--episodes", "4", "--n-envs", "2", "--max-steps", "10", "--batch-size", "4",
        "--emb-dim", "8", "--hidden-dim", "8", "--mlp-hidden", "8", "--hash-dim", "8"]


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def test_published_scores_avg_norm():
    table = build_table([FIXTURES / "published_log_scores.tsv"])
    assert table.avg_norm("LOG") == pytest.approx(0.36, abs=0.005)


def test_avg_norm_edge_cases():
    one = ScoreTable([ScoreCell("g", "V", 10.0, 10.0, 10.0)])
    assert one.avg_norm("V") == 1.0
    zeros = ScoreTable([ScoreCell("a", "V", 0.0, 0.0, 5.0), ScoreCell("b", "V", 0.0, 0.0, 7.0)])
    assert zeros.avg_norm("V") == 0.0


def test_window_curve():
    assert window_curve([1, 2, 3, 4], 2).tolist() == [1.0, 1.5, 2.5, 3.5]


def test_train_writes_one_log_per_seed(tmp_path):
    out = tmp_path / "run"
    assert run_cli("train", "--game", "lantern", "--variant", "DRRN", "--seeds", "0,1,2", "--out", out, *FAST) == 0
    for s in (0, 1, 2):
        assert (out / f"seed_{s}" / "runlog.jsonl").exists()
        assert (out / f"seed_{s}" / "checkpoint.npz").exists()
    spec = json.loads((out / "runspec.json").read_text())
    assert spec["max_score"] == 30 and spec["variant_label"] == "DRRN"


def test_rerun_is_identical(tmp_path):
    for name in ("a", "b"):
        assert run_cli("train", "--game", "memory", "--variant", "LOG", "--seeds", "5", "--out", tmp_path / name, *FAST) == 0
    a = (tmp_path / "a" / "seed_5" / "runlog.jsonl").read_bytes()
    b = (tmp_path / "b" / "seed_5" / "runlog.jsonl").read_bytes()
    assert a == b


def test_invalid_flags_fail_before_envs(tmp_path, monkeypatch, capsys):
    created = []
    monkeypatch.setattr(cli, "Trainer", lambda *a, **k: created.append(1))
    code = run_cli("train", "--game", "lantern", "--variant", "GT_STATE", "--po1", "--out", tmp_path / "x")
    assert code == cli.EXIT_CONFIG and not created
    assert "config error" in capsys.readouterr().err
    assert run_cli("train", "--game", "no_such_game", "--out", tmp_path / "y") == cli.EXIT_CONFIG
    assert run_cli("train", "--game", "lantern", "--gamma", "2", "--out", tmp_path / "z") == cli.EXIT_CONFIG


def test_config_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"game": "lantern", "variant": "LOG", "flags": {"att": False},
                               "train": {"episodes": 7, "gamma": 0.5}, "seeds": [3]}))
    args = cli.build_parser().parse_args(["train", "--config", str(cfg), "--episodes", "9", "--no-po2"])
    spec = cli.runspec_from_args(args)
    assert spec.train == {"episodes": 9, "gamma": 0.5}
    assert spec.flags == {"att": False, "use_po2": False}
    assert spec.seeds == [3]
    bad = tmp_path / "bad.json"
    bad.write_text("{ nope")
    assert run_cli("train", "--config", bad) == cli.EXIT_CONFIG


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    assert run_cli("train", "--game", "corridor", "--variant", "DRRN", "--seeds", "0", *FAST) == 0
    assert (tmp_path / "corridor_DRRN" / "seed_0" / "runlog.jsonl").exists()


def test_report_from_runs(tmp_path, capsys):
    runs = tmp_path / "runs"
    for var in ("DRRN", "LOG"):
        assert run_cli("train", "--game", "memory", "--variant", var, "--seeds", "0,1",
                       "--out", runs / var, *FAST) == 0
    out = tmp_path / "report"
    assert run_cli("report", runs, "--out", out, "--window", "2") == 0
    table = json.loads((out / "table.json").read_text())
    assert set(table["avg_norm"]) == {"DRRN", "LOG"}
    assert (out / "learning_curves.png").stat().st_size > 0
    assert (out / "normalized_scores.png").stat().st_size > 0
    # the table is a pure function of the logs
    first = (out / "table.tsv").read_text()
    run_cli("report", runs, "--out", out, "--window", "2", "--no-figures")
    assert (out / "table.tsv").read_text() == first


def test_report_flags_partial_logs(tmp_path):
    run = tmp_path / "run"
    assert run_cli("train", "--game", "lantern", "--variant", "DRRN", "--seeds", "0,1", "--out", run, *FAST) == 0
    log = run / "seed_1" / "runlog.jsonl"
    log.write_text(log.read_text().splitlines()[0] + "\n")
    (run / "seed_0" / "runlog.jsonl").unlink()
    cell = build_table([run]).cells[0]
    assert "seed 0 missing" in cell.status and "seed 1 partial" in cell.status
    assert cell.avg_score is None


def test_report_missing_source():
    assert run_cli("report", "/nonexistent/dir") == cli.EXIT_RUNTIME


def test_eval(tmp_path, capsys):
    run = tmp_path / "run"
    run_cli("train", "--game", "corridor", "--variant", "DRRN", "--seeds", "0", "--out", run, *FAST)
    assert run_cli("eval", run, "--episodes", "2", "--greedy") == 0
    assert "seed 0" in capsys.readouterr().out


def test_play_look_and_quit():
    lines = []
    game = bundled_game("lantern")
    score = cli.cmd_play(game, stdin=io.StringIO("look\nquit\n"), echo=lines.append)
    from drrnlog.engine import TextGameEnv

    env = TextGameEnv(game)
    env.reset()
    assert env.look_text() in lines[1:]
    assert lines[-1] == "Final score: 0" and score == 0


def test_play_show_state():
    lines = []
    cli.cmd_play(bundled_game("maze"), show_state=True, stdin=io.StringIO("north\n"), echo=lines.append)
    state_lines = [x for x in lines if x.startswith("[room")]
    assert len(state_lines) == 2
    assert '[key {"name":' in state_lines[0]


def test_play_episode_end():
    lines = []
    script = "take lantern\nturn on lantern\neast\ndown\nnorth\nopen chest\n"
    score = cli.cmd_play(bundled_game("lantern"), stdin=io.StringIO(script), echo=lines.append)
    assert score == 30 and "The episode is over." in lines


def test_verify_passes_and_names_corruption(tmp_path, capsys):
    from drrnlog.hashrep import GOLDEN_PATH

    assert run_cli("verify", "--grad-instances", "3") == 0
    bad = tmp_path / "golden.tsv"
    bad.write_text(GOLDEN_PATH.read_text().replace("0xaf63dc4c8601ec8c", "0xaf63dc4c8601ec8d"))
    capsys.readouterr()
    assert run_cli("verify", "--golden", bad, "--grad-instances", "1") == cli.EXIT_VERIFY
    out = capsys.readouterr().out
    assert "FAIL\tgolden hashes" in out and "'a'" in out
