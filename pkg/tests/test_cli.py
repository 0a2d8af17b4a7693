import subprocess
import sys

import pytest

from canalrl import checkpoint
from canalrl.cli import main
from canalrl.metrics import read_report
from canalrl.sac import parse_reward_log

FAST = ["--set", "sac.hidden_sizes=16,16", "--set", "sac.batch_size=32"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["demo", "--episodes", "4", "--seed", "2", "--out", str(d / "demos.tsv")]) == 0
    return d


def test_demo_deterministic(workdir):
    other = workdir / "again.tsv"
    assert main(["demo", "--episodes", "4", "--seed", "2", "--out", str(other)]) == 0
    assert other.read_bytes() == (workdir / "demos.tsv").read_bytes()


def test_demo_zero_episodes_is_usage_error(workdir, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["demo", "--episodes", "0", "--out", str(workdir / "x.tsv")])
    assert exc.value.code == 2


def test_demo_unsolvable_anatomy_fails(workdir, capsys):
    code = main(["demo", "--episodes", "2", "--set", "anatomy.episode_cap_s=0.2", "--out", str(workdir / "x.tsv")])
    assert code == 1
    assert "flexion" in capsys.readouterr().err


def test_train_pretrain_only(workdir):
    ckpt = workdir / "pre.ckpt"
    code = main(["train", "--demos", str(workdir / "demos.tsv"), "--out", str(ckpt), "--episodes", "0",
                 "--reward-log", str(workdir / "pre.log"), "--set", "sac.pretrain_updates=1000", *FAST])
    assert code == 0
    nets, _ = checkpoint.load_checkpoint(ckpt)
    assert nets.update_count == 1000
    assert (workdir / "pre.log").read_text() == ""


def test_train_refuses_other_anatomy(workdir, capsys):
    code = main(["train", "--demos", str(workdir / "demos.tsv"), "--out", str(workdir / "no.ckpt"),
                 "--episodes", "0", "--set", "anatomy.flexion_angle_deg=120"])
    assert code == 1 and "refusing" in capsys.readouterr().err


@pytest.fixture(scope="module")
def short_run(workdir):
    # demonstrations must come from the same (shortened) anatomy
    demos = workdir / "short_demos.tsv"
    assert main(["demo", "--episodes", "3", "--set", "anatomy.episode_cap_s=1.0", "--out", str(demos)]) == 0
    args = ["train", "--demos", str(demos), "--episodes", "2", "--set", "sac.pretrain_updates=5",
            "--set", "anatomy.episode_cap_s=1.0", *FAST]
    outs = []
    for tag in ("a", "b"):
        ckpt, log = workdir / f"{tag}.ckpt", workdir / f"{tag}.log"
        assert main(args + ["--out", str(ckpt), "--reward-log", str(log)]) == 0
        outs.append((ckpt, log))
    return outs


def test_train_deterministic(short_run):
    (c1, l1), (c2, l2) = short_run
    assert c1.read_bytes() == c2.read_bytes()
    assert l1.read_bytes() == l2.read_bytes()
    assert len(parse_reward_log(l1.read_text())) == 2


def test_eval_deterministic_and_parallel(short_run, workdir):
    ckpt = short_run[0][0]
    base = ["eval", "--checkpoint", str(ckpt), "--episodes", "3", "--set", "anatomy.episode_cap_s=1.0",
            "--set", "sac.pretrain_updates=5", *FAST]
    assert main(base + ["--out", str(workdir / "e1.tsv")]) == 0
    assert main(base + ["--out", str(workdir / "e2.tsv"), "--workers", "2"]) == 0
    assert (workdir / "e1.tsv").read_bytes() == (workdir / "e2.tsv").read_bytes()
    assert (workdir / "e1.tsv.forces.tsv").read_bytes() == (workdir / "e2.tsv.forces.tsv").read_bytes()


def test_eval_oracle_and_report(workdir, capsys):
    oracle = workdir / "oracle.tsv"
    assert main(["eval", "--oracle", "--episodes", "5", "--out", str(oracle)]) == 0
    rep = read_report(oracle)
    assert rep.success_rate == 1.0 and rep.label == "oracle"

    single = workdir / "single.tsv"
    assert main(["report", "--runs", str(oracle), "--out", str(single)]) == 0
    lines = single.read_text().splitlines()
    assert len(lines) == 6
    t_e = rep.summary()["t_e"]
    row = dict(zip(lines[0].split("\t"), lines[4].split("\t")))
    assert float(row["oracle:median"]) == t_e.median

    both = workdir / "both.tsv"
    assert main(["report", "--runs", str(oracle), str(oracle), "--out", str(both)]) == 0
    rows = both.read_text().splitlines()
    assert len(rows) == 6 and rows[0].count("\t") == 10


def test_report_malformed(workdir, capsys):
    bad = workdir / "bad.tsv"
    bad.write_text("# canalrl-report v1 label=x\nepisode_id\tsuccess\tF_max\tF_i\tF_FFT\tt_e\n0\t1\tzz\t1\t1\t1\n")
    assert main(["report", "--runs", str(bad), "--out", str(workdir / "o.tsv")]) == 1
    assert "bad.tsv:3" in capsys.readouterr().err


def test_eval_rejects_mismatched_dims(workdir, capsys):
    import numpy as np
    from canalrl.sac import make_agent
    path = workdir / "wrong.ckpt"
    checkpoint.save_checkpoint(make_agent(np.random.default_rng(0), obs_dim=7, hidden=(4, 4)), path)
    with pytest.warns(checkpoint.ConfigHashMismatch):
        code = main(["eval", "--checkpoint", str(path), "--episodes", "1", "--out", str(workdir / "w.tsv")])
    assert code == 1
    assert "dims" in capsys.readouterr().err


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "canalrl.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("demo", "train", "eval", "report"):
        assert cmd in out.stdout
