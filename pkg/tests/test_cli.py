"""End-to-end tests for the command-line interface (exit codes, artifacts)."""

import hashlib
import json
import signal
import socket
import subprocess
import sys
import time
import urllib.request
from pathlib import Path

import pytest

from gestigo.cli import run
from gestigo.model import GestureNet
from gestigo.service import write_replay_file
from gestigo.synth import synthetic_sequence

TINY_ARCH = ["--encoder-widths", "8,16", "--tuner-widths", "4",
             "--head-hidden", "32", "--tuner-head-hidden", "16",
             "--pseudo-px", "16"]


def free_port() -> int:
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    return port


def tree_digest(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def cli_artifacts(dhg_toy_root, tmp_path_factory):
    """Encoded images plus a 2-epoch checkpoint, built through the CLI."""
    base = tmp_path_factory.mktemp("cli")
    enc, run_dir = base / "enc", base / "run"
    rc = run(["encode", "--dataset", "DHG1428_14G", "--root", str(dhg_toy_root),
              "--out", str(enc), "--vos", "custom,top-down",
              "--master-px", "192", "--workers", "2"])
    assert rc == 0
    rc = run(["train", "--dataset", "DHG1428_14G", "--images", str(enc),
              "--out", str(run_dir), "--vos", "custom,top-down",
              "--epochs", "2", "--batch-size", "8", "--lr-grid", "none",
              "--stage-sizes", "32"] + TINY_ARCH)
    assert rc == 0
    return {"root": dhg_toy_root, "enc": enc, "run": run_dir,
            "ckpt": run_dir / "model.ckpt"}


# -- usage-level failures (exit 1) --------------------------------------------

def test_no_arguments_prints_help(capsys):
    assert run([]) == 1
    assert "COMMAND" in capsys.readouterr().out


def test_help_exits_zero():
    assert run(["--help"]) == 0
    assert run(["train", "--help"]) == 0


def test_unknown_command_and_flags():
    assert run(["polish"]) == 1
    assert run(["train"]) == 1                       # missing --dataset
    assert run(["encode", "--dataset", "DHG1428_14G"]) == 1
    assert run(["train", "--dataset", "nope"]) == 1  # not a known dataset


def test_train_source_flag_combinations(cli_artifacts, tmp_path):
    common = ["train", "--dataset", "DHG1428_14G", "--out", str(tmp_path),
              "--vos", "custom", "--stage-sizes", "32"] + TINY_ARCH
    assert run(common) == 1  # neither --root nor --images
    assert run(common + ["--root", str(cli_artifacts["root"]),
                         "--images", str(cli_artifacts["enc"])]) == 1
    assert run(common + ["--images", str(cli_artifacts["enc"]),
                         "--subset", "swipe"]) == 1
    assert run(common + ["--images", str(cli_artifacts["enc"]),
                         "--streams", "5"]) == 1


# -- encode -------------------------------------------------------------------

def test_encode_layout(cli_artifacts):
    enc = cli_artifacts["enc"] / "DHG1428_14G"
    assert (enc / "manifest.tsv").exists()
    pngs = list(enc.rglob("*.png"))
    assert len(pngs) == 48  # 24 gestures x 2 views
    assert {p.parts[-4] for p in pngs} == {"custom", "top-down"}


def test_encode_is_idempotent(cli_artifacts, dhg_toy_root):
    before = tree_digest(cli_artifacts["enc"])
    rc = run(["encode", "--dataset", "DHG1428_14G", "--root", str(dhg_toy_root),
              "--out", str(cli_artifacts["enc"]), "--vos", "custom,top-down",
              "--master-px", "192", "--workers", "2"])
    assert rc == 0
    assert tree_digest(cli_artifacts["enc"]) == before


def test_encode_data_errors(tmp_path):
    assert run(["encode", "--dataset", "DHG1428_14G", "--root",
                str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 2
    assert run(["encode", "--dataset", "DHG1428_14G", "--root", str(tmp_path),
                "--out", str(tmp_path / "o"), "--vos", "sideways"]) == 2


# -- train --------------------------------------------------------------------

def test_train_artifacts(cli_artifacts):
    run_dir = cli_artifacts["run"]
    net = GestureNet.load(cli_artifacts["ckpt"])
    assert net.config.vo_names == ("custom", "top-down")
    assert net.config.stage_sizes == (32,)
    rows = (run_dir / "summary.tsv").read_text().splitlines()
    assert len(rows) == 1 + 2  # header + one row per epoch
    log = (run_dir / "train.log").read_text()
    assert "stage 1 size 32 epoch 1/2" in log
    assert "gestigo train  dataset DHG1428_14G" in log


def test_train_stream_prefix(cli_artifacts, tmp_path, capsys):
    rc = run(["train", "--dataset", "DHG1428_14G",
              "--images", str(cli_artifacts["enc"]), "--out", str(tmp_path),
              "--vos", "custom,top-down", "--streams", "1",
              "--epochs", "1", "--batch-size", "8", "--lr-grid", "none",
              "--stage-sizes", "32"] + TINY_ARCH)
    assert rc == 0
    assert "views custom\n" in capsys.readouterr().out.replace("  ", " ") or \
        GestureNet.load(tmp_path / "model.ckpt").config.vo_names == ("custom",)


# -- config files -------------------------------------------------------------

def test_config_file_flags_take_precedence(cli_artifacts, tmp_path):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("# toy settings\nstage-sizes = 32\nbatch_size = 8\n"
                   "lr-grid = none\nepochs = 3\n")
    out = tmp_path / "out"
    rc = run(["train", "--dataset", "DHG1428_14G",
              "--images", str(cli_artifacts["enc"]), "--out", str(out),
              "--vos", "custom", "--config", str(cfg), "--epochs", "1"]
             + TINY_ARCH)
    assert rc == 0
    # stage size 32 came from the file; the explicit --epochs 1 beat epochs = 3
    rows = (out / "summary.tsv").read_text().splitlines()
    assert len(rows) == 2
    assert rows[1].split("\t")[1] == "32"


def test_config_file_errors(cli_artifacts, tmp_path):
    base = ["train", "--dataset", "DHG1428_14G",
            "--images", str(cli_artifacts["enc"]), "--out", str(tmp_path / "o"),
            "--vos", "custom", "--stage-sizes", "32"] + TINY_ARCH
    bad_key = tmp_path / "bad_key.cfg"
    bad_key.write_text("no-such-flag = 5\n")
    assert run(base + ["--config", str(bad_key)]) == 1
    bad_line = tmp_path / "bad_line.cfg"
    bad_line.write_text("just some words\n")
    assert run(base + ["--config", str(bad_line)]) == 1
    bad_bool = tmp_path / "bad_bool.cfg"
    bad_bool.write_text("augment = maybe\n")
    assert run(base + ["--config", str(bad_bool)]) == 1
    assert run(base + ["--config", str(tmp_path / "missing.cfg")]) == 1


# -- eval ---------------------------------------------------------------------

def test_eval_reports(cli_artifacts, tmp_path, capsys):
    report, heat = tmp_path / "report.tsv", tmp_path / "confusion.png"
    rc = run(["eval", "--model", str(cli_artifacts["ckpt"]),
              "--images", str(cli_artifacts["enc"]),
              "--out", str(report), "--heatmap", str(heat)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "accuracy" in out and "val gestures" in out
    assert report.read_text().startswith("# gestigo evaluation report")
    assert heat.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_eval_train_split(cli_artifacts, capsys):
    rc = run(["eval", "--model", str(cli_artifacts["ckpt"]),
              "--images", str(cli_artifacts["enc"]), "--split", "train"])
    assert rc == 0
    assert "train gestures" in capsys.readouterr().out


def test_eval_vo_mismatch(cli_artifacts):
    rc = run(["eval", "--model", str(cli_artifacts["ckpt"]),
              "--images", str(cli_artifacts["enc"]),
              "--vos", "top-down,custom"])
    assert rc == 2


def test_eval_missing_checkpoint(cli_artifacts, tmp_path):
    rc = run(["eval", "--model", str(tmp_path / "none.ckpt"),
              "--images", str(cli_artifacts["enc"])])
    assert rc == 2


# -- vo-search ----------------------------------------------------------------

def test_vo_search_cli(dhg_toy_root, tmp_path, capsys):
    out = tmp_path / "search"
    rc = run(["vo-search", "--dataset", "DHG1428_14G",
              "--root", str(dhg_toy_root), "--master-px", "192",
              "--out", str(out), "--size", "32", "--epochs", "1",
              "--batch-size", "8", "--top-singles", "3", "--top-pairs", "1",
              "--encoder-widths", "8,16", "--tuner-widths", "4",
              "--head-hidden", "16", "--tuner-head-hidden", "8",
              "--pseudo-px", "16"])
    assert rc == 0
    assert "chosen" in capsys.readouterr().out
    text = (out / "search.tsv").read_text()
    # six singles, six ordered pairs of the best three, one extension
    assert "trainings\t13" in text
    assert text.startswith("# gestigo view-orientation search")


# -- replay + serve -----------------------------------------------------------

def test_replay_connection_refused(tmp_path):
    gesture = tmp_path / "g.json"
    write_replay_file(synthetic_sequence("DHG1428_14G", 5, seed=9), gesture)
    rc = run(["replay", "--file", str(gesture),
              "--uri", f"ws://127.0.0.1:{free_port()}",
              "--fps", "0", "--timeout", "2"])
    assert rc == 2


def test_replay_missing_file(tmp_path):
    assert run(["replay", "--file", str(tmp_path / "nope.json"),
                "--fps", "0", "--timeout", "2"]) == 2


def test_serve_vo_mismatch(cli_artifacts):
    assert run(["serve", "--model", str(cli_artifacts["ckpt"]),
                "--vos", "top-down"]) == 2


def test_serve_and_replay_round_trip(cli_artifacts, tmp_path, capsys):
    gesture = tmp_path / "gesture.json"
    write_replay_file(synthetic_sequence("DHG1428_14G", 5, seed=9), gesture)
    port = free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "gestigo.cli", "serve",
         "--model", str(cli_artifacts["ckpt"]), "--bind", f"127.0.0.1:{port}"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    try:
        deadline = time.monotonic() + 30
        while True:
            try:
                with urllib.request.urlopen(
                        f"http://127.0.0.1:{port}/healthz", timeout=0.5) as resp:
                    assert resp.status == 200
                    break
            except OSError:
                if time.monotonic() > deadline or proc.poll() is not None:
                    raise AssertionError("server did not come up")
                time.sleep(0.2)
        rc = run(["replay", "--file", str(gesture),
                  "--uri", f"ws://127.0.0.1:{port}", "--fps", "0"])
        assert rc == 0
        msg = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert msg["type"] == "prediction"
        assert len(msg["streams"]) == 2   # checkpoint has two views
        proc.send_signal(signal.SIGINT)
        assert proc.wait(timeout=10) == 0
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.wait(timeout=10)
