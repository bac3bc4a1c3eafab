import argparse

import pytest

from ptav import cli
from ptav.bench import io as seqio

SCRIPT = """
width = 160
height = 120
frames = 25
target = 50,40,24,24
texture_seed = 2
event: translate start=0 end=25 vx=1 vy=0.5
"""


@pytest.fixture(scope="module")
def seq_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "s.txt").write_text(SCRIPT)
    assert cli.main(["synth", str(d / "s.txt"), "--seed", "3", "--out", str(d / "seq")]) == 0
    return d


def test_synth_round_trip_and_bytes(seq_dir, tmp_path):
    seq = seqio.load_sequence(seq_dir / "seq")
    assert len(seq) == 25 and seq.ground_truth[0].as_tuple() == (50.0, 40.0, 24.0, 24.0)
    assert cli.main(["synth", str(seq_dir / "s.txt"), "--seed", "3", "--out", str(tmp_path / "again")]) == 0
    for i in (1, 25):
        name = f"img/{i:04d}.png"
        assert (tmp_path / "again" / name).read_bytes() == (seq_dir / "seq" / name).read_bytes()


def test_synth_bad_script_exit_3(tmp_path):
    (tmp_path / "bad.txt").write_text("frames = ten\n")
    assert cli.main(["synth", str(tmp_path / "bad.txt"), "--out", str(tmp_path / "o")]) == 3
    (tmp_path / "off.txt").write_text("frames = 40\ntarget = 5,5,10,10\nevent: translate start=0 end=40 vx=-3 vy=0\n")
    assert cli.main(["synth", str(tmp_path / "off.txt"), "--out", str(tmp_path / "o")]) == 3


def test_track_writes_results_trace_annotations(seq_dir, tmp_path):
    out = tmp_path / "r.txt"
    code = cli.main(["track", "--seq", str(seq_dir / "seq"), "--out", str(out), "--trace", str(tmp_path / "t.txt"),
                     "--annotate", str(tmp_path / "ann"), "--mode", "lockstep", "--seed", "7"])
    assert code == 0
    assert len(out.read_text().splitlines()) == 25
    assert "FrameTracked" in (tmp_path / "t.txt").read_text()
    assert len(list((tmp_path / "ann").glob("*.png"))) == 25


def test_track_deterministic(seq_dir, tmp_path):
    args = ["track", "--seq", str(seq_dir / "seq"), "--mode", "lockstep", "--seed", "7", "--n-int", "3"]
    cli.main(args + ["--out", str(tmp_path / "a.txt"), "--trace", str(tmp_path / "a.log")])
    cli.main(args + ["--out", str(tmp_path / "b.txt"), "--trace", str(tmp_path / "b.log")])
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    assert (tmp_path / "a.log").read_bytes() == (tmp_path / "b.log").read_bytes()


def test_track_errors(seq_dir, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("tracker.alpah = 0.2\n")
    out = tmp_path / "r.txt"
    assert cli.main(["track", "--seq", str(seq_dir / "seq"), "--config", str(cfg), "--out", str(out)]) == 3
    assert not out.exists()
    assert cli.main(["track", "--seq", str(tmp_path / "nope"), "--out", str(out)]) == 2
    assert cli.main(["track", "--seq", str(seq_dir / "seq"), "--alpha", "3", "--out", str(out)]) == 3


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# comment\nruntime.n_int = 4\ntracker.alpha = 0.2\nverifier.candidate_scales = 1.0, 1.1\n"
                   "runtime.update_on_pass = false\nverifier.threads = none\n")
    ns = argparse.Namespace(config=str(cfg), n_int=None, alpha=0.5, mode=None)
    rc = cli.build_config(ns)
    assert rc.runtime.n_int == 4 and rc.tracker.alpha == 0.5
    assert rc.verifier.candidate_scales == (1.0, 1.1) and rc.runtime.update_on_pass is False
    with pytest.raises(cli.ConfigError):
        cli.parse_config("verifier.tau1 = high\n")
    with pytest.raises(cli.ConfigError):
        cli.parse_config("nosection = 1\n")


def test_eval_reports_and_plots(seq_dir, tmp_path, capsys):
    gt = seq_dir / "seq" / "groundtruth_rect.txt"
    tracked = tmp_path / "tracked.txt"
    cli.main(["track", "--seq", str(seq_dir / "seq"), "--out", str(tracked), "--verifier", "none"])
    capsys.readouterr()
    assert cli.main(["eval", str(gt), "--gt", str(gt)]) == 0
    assert "dpr20 = 1.0" in capsys.readouterr().out
    out = tmp_path / "ev"
    assert cli.main(["eval", str(gt), str(tracked), "--seq", str(seq_dir / "seq"), "--out", str(out)]) == 0
    assert (out / "precision.svg").read_text().count("<polyline") == 2
    assert len((out / "tracked_precision.csv").read_text().splitlines()) == 52
    assert len((out / "tracked_success.csv").read_text().splitlines()) == 102
    short = tmp_path / "short.txt"
    short.write_text("1,1,5,5\n")
    assert cli.main(["eval", str(short), "--gt", str(gt)]) == 2


def test_compare_rows(seq_dir, capsys):
    seq = str(seq_dir / "seq")
    assert cli.main(["compare", "--seq", seq, "--mode", "lockstep"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and lines[0].split()[:2] == ["mode", "N_int"]
    assert cli.main(["compare", "--seq", seq, "--sweep-n-int", "5", "10", "15"]) == 0
    rows = capsys.readouterr().out.strip().splitlines()[1:]
    assert [int(r.split()[1]) for r in rows] == [5, 10, 15]
    cli.main(["compare", "--seq", seq, seq, "--sweep-n-int", "5", "5"])
    a, b = capsys.readouterr().out.strip().splitlines()[1:]
    assert a.split()[2:5] == b.split()[2:5]
