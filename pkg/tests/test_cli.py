import filecmp
import json

import numpy as np
import pytest

from hierlstm.cli import EXIT_COMPAT, EXIT_CONFIG, EXIT_DATA, EXIT_VERIFY, main
from hierlstm.gradcheck import GROUPS

FAST = ["--set", "stage1.max_epochs=3", "--set", "stage2.max_epochs=3"]


def same_tree(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.diff_files or cmp.funny_files:
        return False
    for sub in cmp.common_dirs:
        if not same_tree(a / sub, b / sub):
            return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors


@pytest.fixture(scope="module")
def overfit_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("overfit")
    assert main(["gen", "--preset", "overfit", "--out", str(root / "data")]) == 0
    assert main(["train", "--preset", "overfit", "--data", str(root / "data"), "--out", str(root / "m.ckpt")]) == 0
    return root


def test_default_gen_validates(tmp_path, capsys):
    assert main(["gen", "--out", str(tmp_path / "d"), "--set", "data.n_train=4", "--set", "data.n_test=2"]) == 0
    out = capsys.readouterr().out
    assert "# Instances" in out
    assert main(["validate", str(tmp_path / "d")]) == 0
    assert "ok: 6 scenes" in capsys.readouterr().out


def test_gen_is_byte_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["gen", "--preset", "overfit", "--seed", "7", "--out", str(tmp_path / name)]) == 0
    assert same_tree(tmp_path / "a", tmp_path / "b")
    assert main(["gen", "--preset", "overfit", "--seed", "8", "--out", str(tmp_path / "c")]) == 0
    assert not same_tree(tmp_path / "a", tmp_path / "c")


def test_gen_echoes_activity_names(tmp_path):
    args = ["gen", "--out", str(tmp_path / "d"), "--set", "task.rule=key_person", "--set", "task.num_actions=9",
            "--set", "task.num_activities=8", "--set", "task.persons_per_scene=[6,6]",
            "--set", "data.n_train=2", "--set", "data.n_test=1"]
    assert main(args) == 0
    body = (tmp_path / "d" / "manifest.txt").read_text().split("\n", 1)[1]
    assert len(json.loads(body)["activity_names"]) == 8


def test_train_phases_per_variant(overfit_run, tmp_path, capsys):
    data = str(overfit_run / "data")
    assert main(["train", "--preset", "overfit", "--data", data, "--out", str(tmp_path / "b1.ckpt"),
                 "--set", "model.variant=B1", *FAST]) == 0
    assert "stage1" not in capsys.readouterr().out
    b1 = (tmp_path / "b1.ckpt.log.tsv").read_text().splitlines()[1:]
    assert {line.split("\t")[1] for line in b1} == {"stage2"}
    full = (overfit_run / "m.ckpt.log.tsv").read_text().splitlines()[1:]
    assert [line.split("\t")[1] for line in full].count("stage1") == 500
    assert {line.split("\t")[1] for line in full} == {"stage1", "stage2"}


def test_train_rerun_is_byte_identical(overfit_run, tmp_path):
    data = str(overfit_run / "data")
    for name in ("a", "b"):
        assert main(["train", "--preset", "overfit", "--data", data, "--out", str(tmp_path / f"{name}.ckpt"),
                     *FAST]) == 0
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert (tmp_path / "a.ckpt.log.tsv").read_bytes() == (tmp_path / "b.ckpt.log.tsv").read_bytes()


def test_eval_overfit_reports(overfit_run, tmp_path, capsys):
    args = ["eval", "--model", str(overfit_run / "m.ckpt"), "--data", str(overfit_run / "data"), "--split", "train"]
    assert main([*args, "--report", str(tmp_path / "r1")]) == 0
    assert "accuracy 100.0" in capsys.readouterr().out
    summary = (tmp_path / "r1" / "summary.tsv").read_text().splitlines()
    row = dict(zip(summary[0].split("\t"), summary[1].split("\t")))
    assert float(row["accuracy"]) == 1.0 and float(row["person_accuracy"]) == 1.0
    conf = [line.split("\t") for line in (tmp_path / "r1" / "confusion.tsv").read_text().splitlines()[1:]]
    per = [line.split("\t") for line in (tmp_path / "r1" / "per_class.tsv").read_text().splitlines()[1:]]
    for c, p in zip(conf, per):
        assert sum(int(v) for v in c[1:]) == int(p[1])
    assert main([*args, "--report", str(tmp_path / "r2")]) == 0
    assert same_tree(tmp_path / "r1", tmp_path / "r2")


def test_eval_b4_model_with_subgroup_config(overfit_run, tmp_path, capsys):
    data = str(overfit_run / "data")
    assert main(["train", "--preset", "overfit", "--data", data, "--out", str(tmp_path / "b4.ckpt"),
                 "--set", "model.variant=B4", *FAST]) == 0
    code = main(["eval", "--model", str(tmp_path / "b4.ckpt"), "--data", data, "--report", str(tmp_path / "r"),
                 "--preset", "overfit", "--set", "model.pooling.d=2"])
    assert code == EXIT_COMPAT
    assert "B4" in capsys.readouterr().err


def test_eval_dimension_mismatch(overfit_run, tmp_path, capsys):
    other = tmp_path / "other"
    assert main(["gen", "--out", str(other), "--set", "data.n_train=2", "--set", "data.n_test=2"]) == 0
    code = main(["eval", "--model", str(overfit_run / "m.ckpt"), "--data", str(other),
                 "--report", str(tmp_path / "r")])
    assert code == EXIT_COMPAT
    err = capsys.readouterr().err
    assert "model has 6" in err and "dataset has 8" in err


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--seeds", "1"]) == 0
    lines = [line for line in capsys.readouterr().out.splitlines() if "max_rel_err" in line]
    assert len(lines) == len(GROUPS) and all(line.endswith("PASS") for line in lines)
    assert main(["gradcheck", "--seeds", "1", "--corrupt", "fc"]) == EXIT_VERIFY
    out = capsys.readouterr().out
    assert "FAILED: fc" in out


def test_ablate_table(overfit_run, tmp_path, capsys):
    code = main(["ablate", "--preset", "overfit", "--data", str(overfit_run / "data"),
                 "--report", str(tmp_path / "r"), "--variants", "Full,B1,B3", "--grid", "1:average", *FAST])
    assert code == 0
    rows = (tmp_path / "r" / "ablation.tsv").read_text().splitlines()
    assert [r.split("\t")[0] for r in rows[1:]] == ["Full", "B1", "B3", "Full"]
    table = capsys.readouterr().out
    assert "B3-Fine-tuned Person Classification" in table


def test_error_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model:\n  hidden_units: 3\n")
    assert main(["gen", "--config", str(bad), "--out", str(tmp_path / "d")]) == EXIT_CONFIG
    assert main(["gen", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path / "d")]) == EXIT_CONFIG
    assert main(["validate", str(tmp_path / "nowhere")]) == EXIT_DATA
    assert main(["train", "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "m")]) == EXIT_DATA
    with pytest.raises(SystemExit) as e:
        main(["train"])
    assert e.value.code == 2
    capsys.readouterr()


def test_validate_reports_errors(tmp_path, capsys):
    assert main(["gen", "--out", str(tmp_path / "d"), "--set", "data.n_train=2", "--set", "data.n_test=1"]) == 0
    scene = sorted((tmp_path / "d" / "scenes").iterdir())[0]
    lines = scene.read_text().splitlines()
    scene.write_text("\n".join(lines[:-1]) + "\n")
    assert main(["validate", str(tmp_path / "d")]) == EXIT_DATA
    assert scene.name in capsys.readouterr().out


def test_verbosity_env(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("HIERLSTM_VERBOSITY", "0")
    assert main(["gradcheck", "--seeds", "1"]) == 0
    monkeypatch.setenv("HIERLSTM_VERBOSITY", "loud")
    assert main(["gradcheck", "--seeds", "1"]) == 0
    assert np.isfinite(len(capsys.readouterr().out))
