import numpy as np
import pytest

from modbridge.cli import main
from modbridge.core import load_features, load_labels


def _synth(tmp_path, seed=1, identities=4, per=6, dim=16):
    data = tmp_path / "data"
    rc = main(["synth", "--identities", str(identities), "--per", str(per),
               "--dim", str(dim), "--intra-sigma", "0.05", "--shift", "0.3",
               "--seed", str(seed), "--out", str(data)])
    assert rc == 0
    return data


_RUN_OVERRIDES = ["--total-epochs", "4", "--warmup-epochs", "2",
                  "--batch-p", "4", "--batch-k", "4",
                  "--learning-rate", "0.001", "--dbscan-eps", "0.3",
                  "--kappa", "10", "--seed", "1"]


def test_synth_writes_four_files(tmp_path):
    data = _synth(tmp_path)
    for name in ("visible_features.bin", "infrared_features.bin",
                 "visible_truth.txt", "infrared_truth.txt"):
        assert (data / name).exists()
    feats = load_features(data / "visible_features.bin", "binary")
    assert (feats.n, feats.d) == (24, 16)
    truth = load_labels(data / "visible_truth.txt")
    assert sorted(np.unique(truth)) == [0, 1, 2, 3]


def test_synth_csv_format(tmp_path):
    data = tmp_path / "csvdata"
    rc = main(["synth", "--identities", "2", "--per", "3", "--dim", "4",
               "--format", "csv", "--out", str(data)])
    assert rc == 0
    assert (data / "visible_features.csv").exists()


def test_run_produces_outputs(tmp_path, capsys):
    data = _synth(tmp_path)
    out = tmp_path / "out"
    rc = main(["run", "--data", str(data), "--out", str(out)] + _RUN_OVERRIDES)
    assert rc == 0
    for name in ("metrics.csv", "resolved_config.txt",
                 "visible_embeddings.bin", "infrared_embeddings.bin",
                 "memory_visible.bin", "memory_infrared.bin",
                 "label_quality.png", "losses.png", "retrieval.png"):
        assert (out / name).exists(), name
    lines = (out / "metrics.csv").read_text().strip().split("\n")
    assert lines[0].startswith("epoch,L_MS")
    assert len(lines) == 5
    stdout = capsys.readouterr().out
    assert "# resolved config" in stdout
    assert "total_epochs=4" in stdout
    assert "final epoch 3" in stdout


def test_run_twice_byte_identical_metrics(tmp_path):
    data = _synth(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        rc = main(["run", "--data", str(data), "--out", str(out),
                   "--no-plots"] + _RUN_OVERRIDES)
        assert rc == 0
    assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()
    assert (out1 / "visible_embeddings.bin").read_bytes() \
        == (out2 / "visible_embeddings.bin").read_bytes()


def test_run_config_file_plus_flag_override(tmp_path, capsys):
    data = _synth(tmp_path)
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("total_epochs=2\nwarmup_epochs=1\nbatch_p=4\nbatch_k=4\n"
                   "learning_rate=0.001\ndbscan_eps=0.3\nkappa=10\nseed=1\n")
    out = tmp_path / "out"
    rc = main(["run", "--config", str(cfg), "--data", str(data),
               "--out", str(out), "--no-plots", "--total-epochs", "3"])
    assert rc == 0
    resolved = (out / "resolved_config.txt").read_text()
    assert "total_epochs=3" in resolved  # flag wins over file
    assert "warmup_epochs=1" in resolved


def test_run_disable_validation(tmp_path, capsys):
    data = _synth(tmp_path)
    rc = main(["run", "--data", str(data), "--out", str(tmp_path / "o"),
               "--disable", "npc,bogus", "--no-plots"] + _RUN_OVERRIDES)
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_run_missing_data_dir(tmp_path, capsys):
    rc = main(["run", "--data", str(tmp_path / "nope"),
               "--out", str(tmp_path / "o"), "--no-plots"])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_ablate_custom_grid(tmp_path, capsys):
    data = _synth(tmp_path)
    out = tmp_path / "abl"
    rc = main(["ablate", "--data", str(data), "--out", str(out),
               "--grid", "baseline;npc+nrl+otpm+mhl", "--no-plots",
               "--total-epochs", "3", "--warmup-epochs", "1",
               "--batch-p", "4", "--batch-k", "4", "--learning-rate", "0.001",
               "--dbscan-eps", "0.3", "--kappa", "10", "--seed", "1"])
    assert rc == 0
    lines = (out / "ablation.csv").read_text().strip().split("\n")
    assert lines[0] == "modules,rank1,mAP,ARI_v,ARI_r"
    assert len(lines) == 3
    assert "baseline" in capsys.readouterr().out


def test_ablate_rejects_bad_grid_entry(tmp_path, capsys):
    data = _synth(tmp_path)
    rc = main(["ablate", "--data", str(data), "--out", str(tmp_path / "o"),
               "--grid", "mhl", "--no-plots"])
    assert rc == 1
    assert "together" in capsys.readouterr().err


def test_eval_outputs(tmp_path, capsys):
    data = _synth(tmp_path)
    out = tmp_path / "eval"
    rc = main(["eval",
               "--query-features", str(data / "infrared_features.bin"),
               "--query-truth", str(data / "infrared_truth.txt"),
               "--gallery-features", str(data / "visible_features.bin"),
               "--gallery-truth", str(data / "visible_truth.txt"),
               "--labels", str(data / "visible_truth.txt"),
               "--label-truth", str(data / "visible_truth.txt"),
               "--out", str(out)])
    assert rc == 0
    assert (out / "eval.json").exists()
    assert (out / "cmc.png").exists()
    lines = (out / "eval.csv").read_text().strip().split("\n")
    assert lines[0] == "metric,value"
    stdout = capsys.readouterr().out
    assert "rank1," in stdout
    assert "ari,1" in stdout  # labels scored against themselves


def test_sinkhorn_command(tmp_path, capsys):
    cost = tmp_path / "cost.csv"
    np.savetxt(cost, np.array([[0.0, 1.0], [1.0, 0.0]]), delimiter=",")
    out = tmp_path / "plan.csv"
    rc = main(["sinkhorn", "--cost", str(cost), "--lambda", "25",
               "--out", str(out)])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "converged=True" in stdout
    plan = np.loadtxt(out, delimiter=",")
    assert np.isclose(plan.sum(), 1.0)
    assert plan[0, 0] > plan[0, 1]


def test_sinkhorn_nonconvergence_exit_code(tmp_path, capsys):
    cost = tmp_path / "cost.csv"
    np.savetxt(cost, np.random.default_rng(0).uniform(0.1, 2.0, size=(5, 4)),
               delimiter=",")
    rc = main(["sinkhorn", "--cost", str(cost), "--max-iters", "1"])
    assert rc == 1
    assert "converged=False" in capsys.readouterr().out


def test_threads_flag_accepted(tmp_path):
    data = _synth(tmp_path)
    out = tmp_path / "out"
    rc = main(["--threads", "2", "run", "--data", str(data),
               "--out", str(out), "--no-plots"] + _RUN_OVERRIDES)
    assert rc == 0


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["definitely-not-a-command"])
    assert exc.value.code == 2
