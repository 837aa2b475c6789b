"""Command-line interface: every subcommand's happy path, the exit-code
contract (1 usage, 2 bad data, 3 impossible arithmetic), and the output
formats downstream tooling parses."""

import json
import subprocess
import sys

import pytest

from poroforest.cli import main
from poroforest.dataset import load_corpus, write_csv

from conftest import synth_dataset


@pytest.fixture(scope="module")
def corpus_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "corpus.csv"
    write_csv(load_corpus(), path)
    return str(path)


@pytest.fixture(scope="module")
def unflagged_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "mixes.csv"
    write_csv(synth_dataset(20, seed=0), path)
    return str(path)


@pytest.fixture(scope="module")
def forest_model(tmp_path_factory, corpus_csv):
    path = tmp_path_factory.mktemp("models") / "rf.json"
    code = main([
        "train-rf", "--input", corpus_csv, "--output", str(path),
        "--n-trees", "25", "--seed", "7",
    ])
    assert code == 0
    return str(path)


@pytest.fixture(scope="module")
def gbt_model(tmp_path_factory, corpus_csv):
    path = tmp_path_factory.mktemp("models") / "gbt.json"
    code = main([
        "train-gbt", "--input", corpus_csv, "--output", str(path),
        "--n-trees", "40",
    ])
    assert code == 0
    return str(path)


class TestExitCodes:
    def test_no_subcommand_is_usage_error(self, capsys):
        assert main([]) == 1
        capsys.readouterr()

    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1
        capsys.readouterr()

    def test_missing_required_flag(self, capsys):
        assert main(["train-rf", "--input", "x.csv"]) == 1
        capsys.readouterr()

    def test_bad_flag_value_is_usage_error(self, corpus_csv, tmp_path,
                                           capsys):
        # values argparse accepts but the library rejects (budget 0,
        # fraction outside (0, 1)) surface as one-line usage errors,
        # not tracebacks
        code = main([
            "tune-rf", "--input", corpus_csv,
            "--output", str(tmp_path / "t.json"), "--budget", "0",
        ])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("poroforest: error:")
        assert "budget" in err

        code = main([
            "split", "--input", corpus_csv,
            "--output", str(tmp_path / "s.csv"), "--fraction", "1.5",
        ])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("poroforest: error:")
        assert "fraction" in err

    def test_missing_input_file_is_data_error(self, tmp_path, capsys):
        code = main([
            "train-rf", "--input", str(tmp_path / "absent.csv"),
            "--output", str(tmp_path / "m.json"),
        ])
        assert code == 2
        err = capsys.readouterr().err
        assert "error" in err

    def test_impossible_mix_is_numeric_error(self, tmp_path, capsys):
        doses = tmp_path / "doses.csv"
        doses.write_text("cement,fly_ash,water\n900,0,40\n")
        code = main(["chemomech", "--input", str(doses)])
        assert code == 3
        capsys.readouterr()

    def test_slag_mix_is_data_error(self, tmp_path, capsys):
        ds = synth_dataset(30, seed=1)
        slag = [i for i, r in enumerate(ds) if r.ggbs > 0]
        assert slag
        mixes = tmp_path / "mixes.csv"
        write_csv(ds.subset(slag), mixes)
        code = main(["chemomech", "--input", str(mixes), "--from-mixes"])
        assert code == 2
        capsys.readouterr()

    def test_empty_explicit_subset_is_data_error(self, unflagged_csv,
                                                 tmp_path, capsys):
        code = main([
            "train-rf", "--input", unflagged_csv,
            "--output", str(tmp_path / "m.json"), "--subset", "test",
        ])
        assert code == 2
        capsys.readouterr()


class TestSplit:
    def test_split_writes_flagged_csv(self, corpus_csv, tmp_path, capsys):
        out = tmp_path / "flagged.csv"
        code = main([
            "split", "--input", corpus_csv, "--output", str(out),
            "--fraction", "0.75", "--seed", "3",
        ])
        assert code == 0
        header = out.read_text().splitlines()[0]
        assert header.endswith(",training")
        msg = capsys.readouterr().out
        assert "train" in msg and "test" in msg

    def test_split_deterministic(self, corpus_csv, tmp_path, capsys):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        main(["split", "--input", corpus_csv, "--output", str(a),
              "--seed", "5"])
        main(["split", "--input", corpus_csv, "--output", str(b),
              "--seed", "5"])
        assert a.read_text() == b.read_text()
        capsys.readouterr()


class TestTraining:
    def test_train_rf_reports_oob(self, corpus_csv, forest_model, capsys,
                                  tmp_path):
        out = tmp_path / "m.json"
        code = main([
            "train-rf", "--input", corpus_csv, "--output", str(out),
            "--n-trees", "25", "--seed", "7",
        ])
        assert code == 0
        msg = capsys.readouterr().out
        assert "OOB" in msg
        # byte-identical rerun: same flags, same file
        with open(out) as fresh, open(forest_model) as earlier:
            assert fresh.read() == earlier.read()

    def test_train_gbt_reports_training_rmse(self, corpus_csv, tmp_path,
                                             capsys):
        out = tmp_path / "m.json"
        code = main([
            "train-gbt", "--input", corpus_csv, "--output", str(out),
            "--n-trees", "30",
        ])
        assert code == 0
        assert "RMSE" in capsys.readouterr().out
        payload = json.loads(out.read_text())
        assert payload["model_kind"] == "boosted"

    def test_auto_subset_uses_training_rows(self, corpus_csv, tmp_path,
                                            capsys):
        out = tmp_path / "m.json"
        main(["train-rf", "--input", corpus_csv, "--output", str(out),
              "--n-trees", "5"])
        payload = json.loads(out.read_text())
        assert payload["n_train"] == 25  # flagged training rows only
        capsys.readouterr()

    def test_all_subset_uses_everything(self, corpus_csv, tmp_path, capsys):
        out = tmp_path / "m.json"
        main(["train-rf", "--input", corpus_csv, "--output", str(out),
              "--n-trees", "5", "--subset", "all"])
        assert json.loads(out.read_text())["n_train"] == 34
        capsys.readouterr()


class TestEvaluate:
    def test_json_output(self, corpus_csv, forest_model, capsys):
        code = main([
            "evaluate", "--input", corpus_csv, "--model", forest_model,
            "--subset", "test", "--json",
        ])
        assert code == 0
        stats = json.loads(capsys.readouterr().out)
        assert set(stats) >= {"rmse", "mape", "r2"}
        assert stats["rmse"] is not None and stats["rmse"] > 0

    def test_text_output(self, corpus_csv, gbt_model, capsys):
        code = main([
            "evaluate", "--input", corpus_csv, "--model", gbt_model,
            "--subset", "train",
        ])
        assert code == 0
        out = capsys.readouterr().out
        for label in ("records:", "rmse:", "mape:", "r2:"):
            assert label in out

    def test_works_on_boosted_and_forest(self, corpus_csv, forest_model,
                                         gbt_model, capsys):
        for model in (forest_model, gbt_model):
            assert main([
                "evaluate", "--input", corpus_csv, "--model", model,
            ]) == 0
        capsys.readouterr()


class TestImportance:
    def test_json_lists_all_features(self, corpus_csv, forest_model, capsys):
        code = main([
            "importance", "--input", corpus_csv, "--model", forest_model,
            "--json",
        ])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert len(payload) == 8
        assert "w_b" in payload
        for entry in payload.values():
            assert set(entry) == {"mean_increase", "std_increase", "vi"}

    def test_rejects_boosted_model(self, corpus_csv, gbt_model, capsys):
        code = main([
            "importance", "--input", corpus_csv, "--model", gbt_model,
        ])
        assert code == 2
        capsys.readouterr()


class TestPdp:
    def test_curve_csv(self, corpus_csv, forest_model, capsys):
        code = main([
            "pdp", "--input", corpus_csv, "--model", forest_model,
            "--feature", "w_b", "--grid", "7",
        ])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "w_b,prediction"
        assert len(lines) == 8

    def test_surface_csv(self, corpus_csv, forest_model, capsys):
        code = main([
            "pdp", "--input", corpus_csv, "--model", forest_model,
            "--feature", "w_b", "--feature2", "binder", "--grid", "3",
        ])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "w_b,binder,prediction"
        assert len(lines) == 10  # 3x3 grid + header

    def test_json_and_file_output(self, corpus_csv, forest_model, tmp_path,
                                  capsys):
        out = tmp_path / "curve.json"
        code = main([
            "pdp", "--input", corpus_csv, "--model", forest_model,
            "--feature", "curing_days", "--json", "--output", str(out),
        ])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["feature"] == "curing_days"
        assert len(payload["grid"]) == len(payload["values"])
        capsys.readouterr()

    def test_unknown_feature_rejected_at_parse(self, corpus_csv,
                                               forest_model, capsys):
        code = main([
            "pdp", "--input", corpus_csv, "--model", forest_model,
            "--feature", "slump",
        ])
        assert code == 1  # argparse choices
        capsys.readouterr()


class TestSensitivity:
    def test_fly_ash_grid(self, forest_model, capsys):
        code = main([
            "sensitivity", "--model", forest_model,
            "--binder-type", "fly_ash",
        ])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "replacement_pct,curing_days,prediction"
        assert len(lines) == 1 + 5 * 5  # 5 replacements x 5 ages

    def test_ggbs_grid_json(self, forest_model, capsys):
        code = main([
            "sensitivity", "--model", forest_model,
            "--binder-type", "ggbs", "--json",
        ])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["binder_type"] == "ggbs"
        rows = payload["rows"]
        assert len(rows) == 5 * 4  # 5 replacements x 4 ages
        assert {r["replacement_pct"] for r in rows} == {0, 10, 20, 30, 40}
        assert {r["curing_days"] for r in rows} == {3, 7, 28, 56}


class TestChemomech:
    def test_dose_table(self, tmp_path, capsys):
        doses = tmp_path / "doses.csv"
        doses.write_text(
            "cement,fly_ash,water\n350,0,192.5\n280,30,154\n"
        )
        code = main(["chemomech", "--input", str(doses)])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("cement,fly_ash,water")
        assert len(lines) == 3
        first = lines[1].split(",")
        assert first[4] == "high_gypsum"

    def test_from_mixes_json(self, tmp_path, capsys):
        ds = synth_dataset(12, seed=3)
        keep = [i for i, r in enumerate(ds) if r.ggbs == 0]
        mixes = tmp_path / "mixes.csv"
        write_csv(ds.subset(keep), mixes)
        code = main([
            "chemomech", "--input", str(mixes), "--from-mixes", "--json",
        ])
        assert code == 0
        rows = json.loads(capsys.readouterr().out)
        assert len(rows) == len(keep)
        for row in rows:
            assert 0.0 < row["porosity"] < 1.0
            assert row["branch"] in ("high_gypsum", "low_gypsum")

    def test_custom_composition(self, tmp_path, capsys):
        comp = {
            "cement": {"CaO": 0.646, "SiO2": 0.223, "Al2O3": 0.036,
                       "Fe2O3": 0.036, "SO3": 0.019},
            "fly_ash": {"CaO": 0.021, "SiO2": 0.605, "Al2O3": 0.23,
                        "Fe2O3": 0.075, "SO3": 0.003},
        }
        comp_path = tmp_path / "comp.json"
        comp_path.write_text(json.dumps(comp))
        doses = tmp_path / "doses.csv"
        doses.write_text("cement,fly_ash,water\n350,0,192.5\n")
        code = main([
            "chemomech", "--input", str(doses),
            "--composition", str(comp_path), "--json",
        ])
        assert code == 0
        rows = json.loads(capsys.readouterr().out)
        assert rows[0]["porosity"] == pytest.approx(0.112864045, abs=1e-6)


class TestTuning:
    def test_tune_rf_writes_model_and_trace(self, corpus_csv, tmp_path,
                                            capsys):
        out = tmp_path / "tuned.json"
        code = main([
            "tune-rf", "--input", corpus_csv, "--output", str(out),
            "--budget", "3", "--seed", "0",
        ])
        assert code == 0
        assert json.loads(out.read_text())["model_kind"] == "forest"
        trace = tmp_path / "tuned.trace.jsonl"
        assert trace.exists()
        rows = [json.loads(l) for l in trace.read_text().splitlines()]
        assert len(rows) == 3
        assert {"min_leaf", "features_per_split"} <= set(rows[0]["point"])
        capsys.readouterr()

    def test_tune_gbt_custom_trace_path(self, corpus_csv, tmp_path, capsys):
        out = tmp_path / "gbt.json"
        trace = tmp_path / "search.jsonl"
        code = main([
            "tune-gbt", "--input", corpus_csv, "--output", str(out),
            "--budget", "3", "--k", "5", "--trace", str(trace),
        ])
        assert code == 0
        assert trace.exists()
        assert json.loads(out.read_text())["model_kind"] == "boosted"
        msg = capsys.readouterr().out
        assert "best" in msg.lower()


class TestEntryPoint:
    def test_module_version(self):
        proc = subprocess.run(
            [sys.executable, "-m", "poroforest", "--version"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "poroforest" in proc.stdout
