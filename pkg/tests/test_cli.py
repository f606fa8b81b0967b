"""End-to-end CLI contracts: subcommands, exit codes, file outputs."""

import pytest

from aecl.cli import main, read_config_file
from aecl.errors import ConfigError

FAST_TRAIN = ["--batch-size", "20", "--epochs", "5", "--e1", "2", "--e2", "1",
              "--d2", "16"]


def run(*argv):
    return main(list(argv))


@pytest.fixture
def synth_files(tmp_path):
    data_dir = tmp_path / "data"
    assert run("synth-data", "--clusters", "3", "--per", "20", "--dim", "8",
               "--sep", "10", "--sigma", "1", "--seed", "7",
               "--out", str(data_dir)) == 0
    return data_dir


def test_synth_data_contract(tmp_path):
    out = tmp_path / "synth"
    code = run("synth-data", "--clusters", "4", "--per", "200", "--dim", "32",
               "--sep", "10", "--sigma", "1", "--seed", "7", "--out", str(out))
    assert code == 0
    header = (out / "view0.emb").read_text().splitlines()[0]
    assert header == "AECL-EMB v1 800 32"
    labels = (out / "labels.txt").read_text().split()
    assert len(labels) == 800


def test_synth_data_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("synth-data", "--clusters", "2", "--per", "5", "--dim", "4",
                   "--seed", "3", "--out", str(tmp_path / name)) == 0
    assert (tmp_path / "a" / "view0.emb").read_bytes() == \
        (tmp_path / "b" / "view0.emb").read_bytes()


def test_synth_data_invalid_shape(tmp_path, capsys):
    code = run("synth-data", "--clusters", "4", "--per", "0", "--dim", "8",
               "--out", str(tmp_path / "x"))
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_train_synthetic_writes_artifacts(tmp_path):
    out = tmp_path / "run"
    code = run("train", "--synthetic", "3x20x8", "--m", "3",
               "--out", str(out), "--seed", "7", *FAST_TRAIN)
    assert code == 0
    for name in ("manifest.txt", "model.ckpt", "curves.csv", "report.csv"):
        assert (out / name).exists(), name
    for figure in ("losses.png", "metrics.png", "cluster_sizes.png"):
        assert (out / figure).exists(), figure
    manifest = (out / "manifest.txt").read_text()
    assert "config.seed=7" in manifest
    assert "digest_view0=" in manifest


def test_train_rerun_is_byte_identical(tmp_path):
    args = ["train", "--synthetic", "3x20x8", "--m", "3", "--seed", "5",
            *FAST_TRAIN]
    assert run(*args, "--out", str(tmp_path / "r1")) == 0
    assert run(*args, "--out", str(tmp_path / "r2")) == 0
    for name in ("report.csv", "curves.csv", "model.ckpt"):
        assert (tmp_path / "r1" / name).read_bytes() == \
            (tmp_path / "r2" / name).read_bytes(), name


def test_train_requires_cluster_count(tmp_path, synth_files, capsys):
    code = run("train", "--view0", str(synth_files / "view0.emb"),
               "--out", str(tmp_path / "r"), *FAST_TRAIN)
    assert code == 2
    assert "number of clusters required" in capsys.readouterr().err


def test_train_infers_m_from_labels(tmp_path, synth_files):
    code = run("train", "--view0", str(synth_files / "view0.emb"),
               "--labels", str(synth_files / "labels.txt"),
               "--out", str(tmp_path / "r"), "--seed", "1", *FAST_TRAIN)
    assert code == 0
    assert "config.m=3" in (tmp_path / "r" / "manifest.txt").read_text()


def test_train_missing_view0_is_config_error(tmp_path):
    assert run("train", "--out", str(tmp_path / "r"), *FAST_TRAIN) == 2


def test_train_without_labels_leaves_metric_columns_empty(tmp_path,
                                                          synth_files):
    out = tmp_path / "run"
    code = run("train", "--view0", str(synth_files / "view0.emb"), "--m", "3",
               "--out", str(out), "--seed", "4", *FAST_TRAIN)
    assert code == 0
    assert (out / "report.csv").read_text().splitlines()[1].startswith(",,,,")
    curves = (out / "curves.csv").read_text().splitlines()
    assert curves[1].endswith(",,,,")  # acc, nmi, ns, ps all empty
    assert not (out / "metrics.png").exists()


def test_train_augment_flag_conflicts_with_view1(tmp_path, synth_files):
    code = run("train", "--view0", str(synth_files / "view0.emb"),
               "--view1", str(synth_files / "view0.emb"), "--augment",
               "--m", "3", "--out", str(tmp_path / "r"), *FAST_TRAIN)
    assert code == 2


def test_train_accepts_external_view1(tmp_path, synth_files):
    import aecl
    view0 = aecl.load_embeddings(synth_files / "view0.emb")
    view1 = aecl.augment_features(view0, 0.1, 0.1, seed=9)
    aecl.save_embeddings(tmp_path / "view1.emb", view1)
    out = tmp_path / "run"
    code = run("train", "--view0", str(synth_files / "view0.emb"),
               "--view1", str(tmp_path / "view1.emb"),
               "--labels", str(synth_files / "labels.txt"), "--m", "3",
               "--out", str(out), "--seed", "4", *FAST_TRAIN)
    assert code == 0
    assert "digest_view1=" in (out / "manifest.txt").read_text()


def test_train_missing_file_is_data_error(tmp_path):
    code = run("train", "--view0", str(tmp_path / "absent.emb"), "--m", "3",
               "--out", str(tmp_path / "r"), *FAST_TRAIN)
    assert code == 3
    bad = tmp_path / "bad.emb"
    bad.write_text("AECL-EMB v1 2 2\n1.0 2.0\n3.0 nan\n")
    code = run("train", "--view0", str(bad), "--m", "2",
               "--out", str(tmp_path / "r2"), *FAST_TRAIN)
    assert code == 3


def test_evaluate_matches_final_training_metrics(tmp_path, synth_files):
    run_dir = tmp_path / "run"
    assert run("train", "--view0", str(synth_files / "view0.emb"),
               "--labels", str(synth_files / "labels.txt"), "--m", "3",
               "--out", str(run_dir), "--seed", "2", *FAST_TRAIN) == 0
    eval_dir = tmp_path / "eval"
    assert run("evaluate", "--ckpt", str(run_dir / "model.ckpt"),
               "--view0", str(synth_files / "view0.emb"),
               "--labels", str(synth_files / "labels.txt"),
               "--batch-size", "20", "--out", str(eval_dir)) == 0
    curves = (run_dir / "curves.csv").read_text().splitlines()
    columns = curves[0].split(",")
    final_acc = curves[-1].split(",")[columns.index("acc")]
    report_row = (eval_dir / "report.csv").read_text().splitlines()[1]
    assert report_row.split(",")[0] == final_acc


def test_evaluate_without_labels_leaves_metrics_empty(tmp_path, synth_files):
    run_dir = tmp_path / "run"
    assert run("train", "--view0", str(synth_files / "view0.emb"), "--m", "3",
               "--out", str(run_dir), "--seed", "2", *FAST_TRAIN) == 0
    eval_dir = tmp_path / "eval"
    assert run("evaluate", "--ckpt", str(run_dir / "model.ckpt"),
               "--view0", str(synth_files / "view0.emb"),
               "--batch-size", "20", "--out", str(eval_dir)) == 0
    row = (eval_dir / "report.csv").read_text().splitlines()[1]
    assert row.startswith(",,,,")
    sizes = (eval_dir / "cluster_sizes.csv").read_text().splitlines()[1:]
    assert sum(int(line.split(",")[1]) for line in sizes) == 60


def test_evaluate_corrupt_checkpoint(tmp_path, synth_files, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_text("garbage\n")
    code = run("evaluate", "--ckpt", str(bad),
               "--view0", str(synth_files / "view0.emb"),
               "--out", str(tmp_path / "e"))
    assert code == 3
    assert "checkpoint parse error" in capsys.readouterr().err


def test_diagnose_requires_labels(tmp_path, synth_files):
    run_dir = tmp_path / "run"
    assert run("train", "--view0", str(synth_files / "view0.emb"), "--m", "3",
               "--out", str(run_dir), "--seed", "2", *FAST_TRAIN) == 0
    code = run("diagnose", "--ckpt", str(run_dir / "model.ckpt"),
               "--view0", str(synth_files / "view0.emb"),
               "--out", str(tmp_path / "d"))
    assert code == 2


def test_diagnose_writes_curve(tmp_path, synth_files):
    run_dir = tmp_path / "run"
    assert run("train", "--view0", str(synth_files / "view0.emb"),
               "--labels", str(synth_files / "labels.txt"), "--m", "3",
               "--out", str(run_dir), "--seed", "2", *FAST_TRAIN) == 0
    diag_dir = tmp_path / "diag"
    assert run("diagnose", "--ckpt", str(run_dir / "model.ckpt"),
               "--view0", str(synth_files / "view0.emb"),
               "--labels", str(synth_files / "labels.txt"),
               "--batch-size", "20", "--out", str(diag_dir)) == 0
    lines = (diag_dir / "ns_curve.csv").read_text().splitlines()
    assert lines[0] == "batch,ns,ps"
    assert len(lines) == 4  # 60 samples / batch 20
    assert (diag_dir / "ns_curve.png").exists()
    for line in lines[1:]:
        _, ns, ps = line.split(",")
        assert float(ps) == 1.0 - float(ns)


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochs_total=4\nepochs_stage1=1\nepochs_stage2=1\n"
                   "lambda4=0.5\nbatch_size=20\nd2=16\n# comment line\n")
    out = tmp_path / "run"
    code = run("train", "--synthetic", "3x20x8", "--m", "3",
               "--config", str(cfg), "--epochs", "5", "--seed", "0",
               "--out", str(out))
    assert code == 0
    manifest = (out / "manifest.txt").read_text()
    assert "config.epochs_total=5" in manifest  # flag wins
    assert "config.lambda4=0.5" in manifest     # file value kept


def test_config_file_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_key=1\n")
    with pytest.raises(ConfigError, match="unknown config key"):
        read_config_file(cfg)
    out = tmp_path / "run"
    assert run("train", "--synthetic", "3x20x8", "--m", "3",
               "--config", str(cfg), "--out", str(out)) == 2


def test_unknown_flag_exits_2(capsys):
    assert run("train", "--definitely-not-a-flag") == 2
    capsys.readouterr()
