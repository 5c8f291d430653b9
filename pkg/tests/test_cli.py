import json

import numpy as np
import pytest

from rupture_bnn.checkpoint import load_checkpoint, read_checkpoint
from rupture_bnn.cli import main
from rupture_bnn.data import FEATURE_NAMES, load_csv
from rupture_bnn.model import init_model

# frozen from the first verified run of generate/train/evaluate with seed 7
SEED7_THRESHOLD = 0.4979093912706748
SEED7_WEIGHTED_F1 = 0.9800303819444443


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def seed7(tmp_path_factory):
    d = tmp_path_factory.mktemp("seed7")
    assert run("generate", "--n", 2000, "--seed", 7, "--out", d / "data.csv") == 0
    assert run("train", "--data", d / "data.csv", "--seed", 7, "--out", d / "model.json") == 0
    assert run("evaluate", "--checkpoint", d / "model.json", "--data", d / "data.csv",
               "--seed", 7, "--out", d / "report.json") == 0
    return d


def test_generate_line_count_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("generate", "--n", 2000, "--seed", 7, "--out", a) == 0
    assert "propagated" in capsys.readouterr().out
    assert run("generate", "--n", 2000, "--seed", 7, "--out", b) == 0
    assert len(a.read_text().splitlines()) == 2001
    assert a.read_bytes() == b.read_bytes()
    assert run("generate", "--n", 50, "--seed", 8, "--out", b) == 0
    assert a.read_bytes() != b.read_bytes()


def test_generate_zero_rows_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("generate", "--n", 0, "--out", tmp_path / "x.csv")
    assert exc.value.code == 2
    assert not (tmp_path / "x.csv").exists()


def test_generate_unwritable_path(tmp_path):
    assert run("generate", "--n", 5, "--out", tmp_path / "missing" / "x.csv") == 1


def test_generator_overrides(tmp_path):
    run("generate", "--n", 200, "--seed", 1, "--s-crit", -100, "--out", tmp_path / "x.csv")
    assert load_csv(tmp_path / "x.csv").labels.sum() == 0


def test_train_zero_epochs_is_initialization(tmp_path):
    run("generate", "--n", 100, "--seed", 2, "--out", tmp_path / "d.csv")
    assert run("train", "--data", tmp_path / "d.csv", "--train-count", 80, "--epochs", 0,
               "--seed", 5, "--out", tmp_path / "m.json") == 0
    assert load_checkpoint(tmp_path / "m.json").same_as(init_model([8, 12, 1], seed=5))
    hist = (tmp_path / "m_history.csv").read_text().splitlines()
    assert hist == ["epoch,elbo,ll,kl,lr"]


def test_train_schema_error(tmp_path, capsys):
    p = tmp_path / "d.csv"
    p.write_text("a,b,c,rupture\n1,2,3,0\n")
    assert run("train", "--data", p, "--out", tmp_path / "m.json") == 1
    assert "missing column" in capsys.readouterr().err


def test_train_bad_row_cites_row(tmp_path, capsys):
    run("generate", "--n", 30, "--seed", 2, "--out", tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    lines[4] = lines[4].rsplit(",", 1)[0] + ",7"
    (tmp_path / "d.csv").write_text("\n".join(lines) + "\n")
    assert run("train", "--data", tmp_path / "d.csv", "--train-count", 20,
               "--out", tmp_path / "m.json") == 1
    assert "row 4" in capsys.readouterr().err


def test_train_outputs_and_checkpoint_metadata(seed7):
    ck = read_checkpoint(seed7 / "model.json")
    assert ck.feature_names == FEATURE_NAMES
    assert (ck.split_seed, ck.train_count) == (7, 1600)
    assert ck.standardizer is not None
    hist = (seed7 / "model_history.csv").read_text().splitlines()
    assert hist[0] == "epoch,elbo,ll,kl,lr"
    assert len(hist) == 301


def test_evaluate_regression(seed7):
    rep = json.loads((seed7 / "report.json").read_text())
    assert rep["threshold"] == SEED7_THRESHOLD
    assert rep["weighted_average"]["f1"] == pytest.approx(SEED7_WEIGHTED_F1, abs=1e-12)
    assert rep["weighted_average"]["f1"] >= 0.85
    assert sum(rep["confusion"].values()) == 400
    hist = (seed7 / "report_histogram.csv").read_text().splitlines()
    assert hist[0] == "bin_center,count,mean_std"
    assert sum(int(line.split(",")[1]) for line in hist[1:]) == 400


def test_evaluate_test_csv_matches_rebuilt_fold(seed7, tmp_path):
    from rupture_bnn.data import write_csv
    from rupture_bnn.pipeline import split_fold

    _, test = split_fold(load_csv(seed7 / "data.csv"), 7, 1600)
    write_csv(test, tmp_path / "test.csv")
    assert run("evaluate", "--checkpoint", seed7 / "model.json", "--test-csv", tmp_path / "test.csv",
               "--seed", 7, "--out", tmp_path / "r.json") == 0
    assert (tmp_path / "r.json").read_bytes() == (seed7 / "report.json").read_bytes()


def test_evaluate_fixed_threshold(seed7, tmp_path):
    run("evaluate", "--checkpoint", seed7 / "model.json", "--data", seed7 / "data.csv",
        "--samples", 50, "--threshold", 0.5, "--out", tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())["threshold"] == 0.5


def test_evaluate_few_samples_warns(seed7, tmp_path):
    with pytest.warns(UserWarning, match="unreliable"):
        code = run("evaluate", "--checkpoint", seed7 / "model.json", "--data", seed7 / "data.csv",
                   "--samples", 2, "--out", tmp_path / "r.json")
    assert code == 0


def test_evaluate_seven_column_csv(seed7, tmp_path, capsys):
    names = FEATURE_NAMES[:7]
    table = load_csv(seed7 / "data.csv")
    p = tmp_path / "seven.csv"
    rows = [",".join(names) + ",rupture"]
    rows += [",".join(repr(v) for v in r[:7]) + f",{y}" for r, y in zip(table.features[:20], table.labels)]
    p.write_text("\n".join(rows) + "\n")
    assert run("evaluate", "--checkpoint", seed7 / "model.json", "--test-csv", p,
               "--out", tmp_path / "r.json") == 1
    assert "height" in capsys.readouterr().err


def test_evaluate_against_seven_input_checkpoint(seed7, tmp_path, capsys):
    from rupture_bnn.checkpoint import save_checkpoint

    save_checkpoint(init_model([7, 12, 1], seed=0), tmp_path / "m7.json")
    assert run("evaluate", "--checkpoint", tmp_path / "m7.json", "--test-csv", seed7 / "data.csv",
               "--samples", 3, "--out", tmp_path / "r.json") == 1
    assert "expects 7 features" in capsys.readouterr().err


def test_evaluate_missing_checkpoint(tmp_path):
    assert run("evaluate", "--checkpoint", tmp_path / "nope.json", "--test-csv", tmp_path / "x.csv",
               "--out", tmp_path / "r.json") == 1


def test_importance_shape_repeats_and_determinism(seed7, tmp_path):
    args = ["importance", "--checkpoint", seed7 / "model.json", "--data", seed7 / "data.csv",
            "--samples", 50, "--repeats", 1, "--seed", 3]
    assert run(*args, "--out", tmp_path / "a.csv") == 0
    assert run(*args, "--out", tmp_path / "b.csv") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert len(lines) == 9
    body = [line.split(",") for line in lines[1:]]
    assert sorted(r[0] for r in body) == sorted(FEATURE_NAMES)
    drops = [float(r[4]) for r in body]
    assert drops == sorted(drops, reverse=True)
    assert all(float(r[3]) == 0.0 for r in body)


def test_importance_embeds_into_report(seed7, tmp_path):
    report = tmp_path / "report.json"
    report.write_bytes((seed7 / "report.json").read_bytes())
    assert run("importance", "--checkpoint", seed7 / "model.json", "--data", seed7 / "data.csv",
               "--samples", 20, "--repeats", 2, "--report", report,
               "--out", tmp_path / "i.csv") == 0
    rep = json.loads(report.read_text())
    assert len(rep["importance"]) == 8
    assert rep["threshold"] == SEED7_THRESHOLD


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# generator settings\nn = 12\nseed = 4  # trailing comment\n")
    run("generate", "--config", cfg, "--out", tmp_path / "a.csv")
    assert len((tmp_path / "a.csv").read_text().splitlines()) == 13
    run("generate", "--config", cfg, "--n", 5, "--out", tmp_path / "b.csv")
    assert len((tmp_path / "b.csv").read_text().splitlines()) == 6
    run("generate", "--n", 12, "--seed", 4, "--out", tmp_path / "c.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "c.csv").read_bytes()


def test_config_file_errors(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour = blue\n")
    with pytest.raises(SystemExit) as exc:
        run("generate", "--config", cfg)
    assert exc.value.code == 2
    cfg.write_text("just words\n")
    with pytest.raises(SystemExit):
        run("generate", "--config", cfg)


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_figures_written(tmp_path):
    run("generate", "--n", 120, "--seed", 2, "--out", tmp_path / "d.csv")
    figs = tmp_path / "figs"
    assert run("train", "--data", tmp_path / "d.csv", "--train-count", 90, "--epochs", 5,
               "--out", tmp_path / "m.json", "--figures", figs) == 0
    assert run("evaluate", "--checkpoint", tmp_path / "m.json", "--data", tmp_path / "d.csv",
               "--samples", 10, "--out", tmp_path / "r.json", "--figures", figs) == 0
    assert run("importance", "--checkpoint", tmp_path / "m.json", "--data", tmp_path / "d.csv",
               "--samples", 10, "--repeats", 1, "--out", tmp_path / "i.csv", "--figures", figs) == 0
    names = {p.name for p in figs.iterdir()}
    assert {"prior_posterior.csv", "prior_posterior.png", "weight_maps.png",
            "score_uncertainty.png", "importance.png"} <= names
    assert (figs / "importance.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    header = (figs / "prior_posterior.csv").read_text().splitlines()[0]
    assert header == "group,bin_center,count,density,prior_density"
