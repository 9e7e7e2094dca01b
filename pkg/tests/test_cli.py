import os

import pytest

from hetda.cli import main


def synth_args(tmp_path, seed=3):
    src = str(tmp_path / "src.csv")
    tgt = str(tmp_path / "tgt.csv")
    rc = main(
        [
            "synth",
            "--classes", "2",
            "--latent-dim", "3",
            "--dim-src", "6",
            "--dim-tgt", "5",
            "--per-class", "12",
            "--noise", "0.3",
            "--shift", "0.5",
            "--seed", str(seed),
            "--out-source", src,
            "--out-target", tgt,
        ]
    )
    assert rc == 0
    return src, tgt


def train_argv(src, tgt, out, seed=3, extra=()):
    return [
        "train",
        "--source", src,
        "--target", tgt,
        "--out", out,
        "--seed", str(seed),
        "--target-labeled-per-class", "3",
        "--max-iters", "5",
        "--no-stop",
        "--batch-src", "8",
        "--batch-labeled", "4",
        "--batch-unlabeled", "6",
        "--embed-dim", "8",
        "--kernel-dim", "4",
        *extra,
    ]


# ------------------------------------------------------------ happy path


def test_synth_then_train_end_to_end(tmp_path, capsys):
    src, tgt = synth_args(tmp_path)
    out = str(tmp_path / "run")
    assert main(train_argv(src, tgt, out)) == 0
    stdout = capsys.readouterr().out
    assert "accuracy" in stdout and "run directory" in stdout
    names = sorted(os.listdir(out))
    assert names == ["config.txt", "embeddings.csv", "metrics.txt", "traces.csv"]
    traces = open(os.path.join(out, "traces.csv")).read().splitlines()
    assert traces[0] == "iter,l_sdl,l_adv,l_c"
    assert len(traces) == 6  # header + 5 iterations
    metrics = open(os.path.join(out, "metrics.txt")).read()
    assert "accuracy: " in metrics
    assert "auc: " in metrics  # two-class task reports AUC


def test_train_same_seed_byte_identical(tmp_path):
    src, tgt = synth_args(tmp_path)
    out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert main(train_argv(src, tgt, out1)) == 0
    assert main(train_argv(src, tgt, out2)) == 0
    for name in ("traces.csv", "metrics.txt", "embeddings.csv"):
        a = open(os.path.join(out1, name), "rb").read()
        b = open(os.path.join(out2, name), "rb").read()
        assert a == b, name


def test_train_different_seed_differs(tmp_path):
    src, tgt = synth_args(tmp_path)
    out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert main(train_argv(src, tgt, out1, seed=3)) == 0
    assert main(train_argv(src, tgt, out2, seed=4)) == 0
    a = open(os.path.join(out1, "traces.csv")).read()
    b = open(os.path.join(out2, "traces.csv")).read()
    assert a != b


def test_stored_config_reproduces_run(tmp_path):
    src, tgt = synth_args(tmp_path)
    out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert main(train_argv(src, tgt, out1)) == 0
    rc = main(
        [
            "train",
            "--source", src,
            "--target", tgt,
            "--out", out2,
            "--target-labeled-per-class", "3",
            "--config", os.path.join(out1, "config.txt"),
        ]
    )
    assert rc == 0
    a = open(os.path.join(out1, "traces.csv"), "rb").read()
    b = open(os.path.join(out2, "traces.csv"), "rb").read()
    assert a == b


def test_explicit_flag_beats_config(tmp_path):
    src, tgt = synth_args(tmp_path)
    out1 = str(tmp_path / "r1")
    assert main(train_argv(src, tgt, out1)) == 0
    out2 = str(tmp_path / "r2")
    rc = main(
        [
            "train",
            "--source", src,
            "--target", tgt,
            "--out", out2,
            "--target-labeled-per-class", "3",
            "--config", os.path.join(out1, "config.txt"),
            "--seed", "99",
        ]
    )
    assert rc == 0
    assert "seed: 99" in open(os.path.join(out2, "config.txt")).read()


def test_no_embeddings_flag(tmp_path):
    src, tgt = synth_args(tmp_path)
    out = str(tmp_path / "run")
    assert main(train_argv(src, tgt, out, extra=("--no-embeddings",))) == 0
    assert not os.path.exists(os.path.join(out, "embeddings.csv"))


def test_log_every_writes_progress(tmp_path, capsys):
    src, tgt = synth_args(tmp_path)
    out = str(tmp_path / "run")
    assert main(train_argv(src, tgt, out, extra=("--log-every", "2"))) == 0
    err = capsys.readouterr().err
    assert "iter 2:" in err and "l_sdl=" in err


# ------------------------------------------------------------ gridsearch


def test_gridsearch_singleton(tmp_path, capsys):
    src, tgt = synth_args(tmp_path)
    out = str(tmp_path / "grid")
    rc = main(
        [
            "gridsearch",
            "--source", src,
            "--target", tgt,
            "--out", out,
            "--seed", "3",
            "--target-labeled-per-class", "3",
            "--max-iters", "2",
            "--no-stop",
            "--batch-src", "8",
            "--batch-labeled", "3",
            "--batch-unlabeled", "6",
            "--embed-dim", "8",
            "--kernel-dim", "4",
            "--beta-grid", "0.5",
            "--gamma-grid", "2.0",
            "--scorer", "holdout",
        ]
    )
    assert rc == 0
    assert "best: beta=0.5 gamma=2.0" in capsys.readouterr().out
    lines = open(os.path.join(out, "results.csv")).read().splitlines()
    assert lines[0] == "beta,gamma,score"
    assert len(lines) == 2


def test_gridsearch_bad_grid_value(tmp_path, capsys):
    src, tgt = synth_args(tmp_path)
    rc = main(
        [
            "gridsearch",
            "--source", src,
            "--target", tgt,
            "--out", str(tmp_path / "g"),
            "--beta-grid", "fast",
        ]
    )
    assert rc == 1
    assert "usage-error" in capsys.readouterr().err


# --------------------------------------------------------------- ablate


def test_ablate_two_modes(tmp_path, capsys):
    src, tgt = synth_args(tmp_path)
    out = str(tmp_path / "abl")
    rc = main(
        [
            "ablate",
            "--source", src,
            "--target", tgt,
            "--out", out,
            "--seed", "3",
            "--target-labeled-per-class", "3",
            "--max-iters", "3",
            "--no-stop",
            "--batch-src", "8",
            "--batch-labeled", "4",
            "--batch-unlabeled", "6",
            "--embed-dim", "8",
            "--kernel-dim", "4",
            "--modes", "full,nosdl",
        ]
    )
    assert rc == 0
    lines = open(os.path.join(out, "ablation.csv")).read().splitlines()
    assert lines[0] == "mode,mean_accuracy,std_accuracy,runs"
    assert len(lines) == 3
    assert lines[1].startswith("full,") and lines[2].startswith("nosdl,")


def test_ablate_unknown_mode_exits_one(tmp_path, capsys):
    src, tgt = synth_args(tmp_path)
    rc = main(
        [
            "ablate",
            "--source", src,
            "--target", tgt,
            "--out", str(tmp_path / "a"),
            "--modes", "full,bogus",
        ]
    )
    assert rc == 1
    err = capsys.readouterr().err
    assert "usage-error" in err and "bogus" in err


# ---------------------------------------------------------- error paths


def test_missing_required_flag_exits_one(capsys):
    rc = main(["train", "--target", "t.csv"])
    assert rc == 1
    assert "usage-error" in capsys.readouterr().err


def test_unknown_subcommand_exits_one(capsys):
    assert main(["explode"]) == 1


def test_missing_data_file_exits_two(tmp_path, capsys):
    rc = main(
        ["train", "--source", str(tmp_path / "nope.csv"), "--target", str(tmp_path / "also.csv")]
    )
    assert rc == 2
    assert "data-error" in capsys.readouterr().err


def test_malformed_data_exits_two(tmp_path, capsys):
    src, tgt = synth_args(tmp_path)
    bad = tmp_path / "bad.csv"
    bad.write_text("1,0.5\n0,oops\n")
    rc = main(["train", "--source", str(bad), "--target", tgt, "--out", str(tmp_path / "r")])
    assert rc == 2
    assert "line 2" in capsys.readouterr().err


def test_invalid_config_combo_exits_two(tmp_path, capsys):
    src, tgt = synth_args(tmp_path)
    rc = main(
        train_argv(src, tgt, str(tmp_path / "r"), extra=("--nd", "0", "--na", "0", "--nc", "0"))
    )
    assert rc == 2
    assert "data-error" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_blowup_exits_three(tmp_path, capsys):
    src, tgt = synth_args(tmp_path)
    rc = main(
        train_argv(
            src,
            tgt,
            str(tmp_path / "r"),
            extra=("--lr-cls", "1e12", "--max-iters", "50"),
        )
    )
    assert rc == 3
    assert "numeric-error" in capsys.readouterr().err


# ----------------------------------------------------------------- help


@pytest.mark.parametrize("cmd", [[], ["train"], ["gridsearch"], ["ablate"], ["synth"]])
def test_help_exits_zero_and_lists_flags(cmd, capsys):
    assert main([*cmd, "--help"]) == 0
    out = capsys.readouterr().out
    if not cmd:
        for sub in ("train", "gridsearch", "ablate", "synth"):
            assert sub in out
    elif cmd[0] == "synth":
        for flag in ("--classes", "--latent-dim", "--per-class", "--noise", "--shift", "--seed"):
            assert flag in out
        assert "default" in out
    else:
        for flag in ("--source", "--target", "--beta", "--gamma", "--seed", "--out"):
            assert flag in out
        assert "default" in out
