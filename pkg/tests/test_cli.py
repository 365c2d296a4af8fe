import csv
import json

import numpy as np
import pytest

from groupsel.cli import main
from groupsel.data import Dataset, Variable, save_csv


def write_regression_data(tmp_path, seed=0, n=40, p=5, binary=False):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    eta = 2 * x[:, 0] - 1.5 * x[:, 1]
    if binary:
        y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
        kind = "binary"
    else:
        y = eta + 0.3 * rng.standard_normal(n)
        kind = "continuous"
    ds = Dataset(
        tuple(Variable(f"x{j}", "quantitative", x[:, j]) for j in range(p)), y, kind
    )
    data = tmp_path / "data.csv"
    schema = tmp_path / "schema.json"
    save_csv(ds, data, schema)
    return data, schema


def write_groups(tmp_path, names, labels):
    path = tmp_path / "groups.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variable", "group"])
        for name, g in zip(names, labels):
            w.writerow([name, g])
    return path


class TestFitCommand:
    def test_happy_path(self, tmp_path):
        data, schema = write_regression_data(tmp_path)
        groups = write_groups(tmp_path, [f"x{j}" for j in range(5)], [1, 1, 2, 2, 3])
        rc = main([
            "fit", "--data", str(data), "--schema", str(schema),
            "--family", "grlasso", "--groups", str(groups),
            "--cv", "5", "--n-lambda", "20",
            "--out-prefix", str(tmp_path / "run"),
        ])
        assert rc == 0
        doc = json.loads((tmp_path / "run_path.json").read_text())
        assert doc["schema_version"] == 1
        assert len(doc["lambdas"]) == 20
        assert doc["df"][0] == 0
        assert "x0" in doc["selected_variables"]
        cv_rows = list(csv.DictReader(open(tmp_path / "run_cv.csv")))
        assert len(cv_rows) == 20

    def test_individual_family_no_groups(self, tmp_path):
        data, schema = write_regression_data(tmp_path, seed=1)
        rc = main([
            "fit", "--data", str(data), "--schema", str(schema),
            "--family", "lasso", "--cv", "5", "--n-lambda", "15",
            "--out-prefix", str(tmp_path / "la"),
        ])
        assert rc == 0

    def test_missing_schema_exits_2(self, tmp_path, capsys):
        data, _ = write_regression_data(tmp_path, seed=2)
        rc = main([
            "fit", "--data", str(data), "--schema", str(tmp_path / "absent.json"),
            "--family", "lasso", "--out-prefix", str(tmp_path / "x"),
        ])
        assert rc == 2
        err = capsys.readouterr().err
        assert "absent.json" in err

    def test_gamma_boundary_exits_2(self, tmp_path):
        data, schema = write_regression_data(tmp_path, seed=3)
        groups = write_groups(tmp_path, [f"x{j}" for j in range(5)], [1, 1, 2, 2, 3])
        rc = main([
            "fit", "--data", str(data), "--schema", str(schema),
            "--family", "grmcp", "--groups", str(groups), "--gamma", "1.0",
            "--out-prefix", str(tmp_path / "bad"),
        ])
        assert rc == 2

    def test_group_family_requires_groups(self, tmp_path):
        data, schema = write_regression_data(tmp_path, seed=4)
        rc = main([
            "fit", "--data", str(data), "--schema", str(schema),
            "--family", "grlasso", "--out-prefix", str(tmp_path / "no"),
        ])
        assert rc == 2


class TestScreenCommand:
    def test_warns_when_narrow(self, tmp_path, capsys):
        data, schema = write_regression_data(tmp_path, seed=5)
        out = tmp_path / "screen.csv"
        rc = main([
            "screen", "--data", str(data), "--schema", str(schema),
            "--method", "dcsis", "--out", str(out),
        ])
        assert rc == 0
        assert "skip screening" in capsys.readouterr().err
        rows = list(csv.DictReader(open(out)))
        assert len(rows) == 5
        assert {r["kept"] for r in rows} <= {"0", "1"}

    def test_rank_column(self, tmp_path):
        data, schema = write_regression_data(tmp_path, seed=6)
        out = tmp_path / "screen.csv"
        main([
            "screen", "--data", str(data), "--schema", str(schema), "--out", str(out),
        ])
        rows = list(csv.DictReader(open(out)))
        ranks = sorted(int(r["rank"]) for r in rows)
        assert ranks == [1, 2, 3, 4, 5]
        top = next(r for r in rows if r["rank"] == "1")
        assert top["variable"] in ("x0", "x1")


class TestClusterCommand:
    def test_outputs(self, tmp_path):
        rng = np.random.default_rng(7)
        a, b = rng.standard_normal(50), rng.standard_normal(50)
        cols = [a, a + 0.01 * rng.standard_normal(50), b, b + 0.01 * rng.standard_normal(50)]
        ds = Dataset(
            tuple(Variable(f"v{j}", "quantitative", c) for j, c in enumerate(cols)),
            rng.standard_normal(50), "continuous",
        )
        data, schema = tmp_path / "c.csv", tmp_path / "c.schema.json"
        save_csv(ds, data, schema)
        rc = main([
            "cluster", "--data", str(data), "--schema", str(schema),
            "--j-boot", "5", "--out-prefix", str(tmp_path / "cl"),
        ])
        assert rc == 0
        dend = json.loads((tmp_path / "cl_dendrogram.json").read_text())
        assert dend["chosen_m"] == 2
        assert len(dend["merges"]) == 3
        rows = list(csv.DictReader(open(tmp_path / "cl_stability.csv")))
        assert [r["m"] for r in rows] == ["2", "3"]


class TestTwoStageCommand:
    def test_report_and_selected(self, tmp_path):
        data, schema = write_regression_data(tmp_path, seed=8, n=60, p=6)
        rc = main([
            "two-stage", "--data", str(data), "--schema", str(schema),
            "--j-boot", "5", "--cv", "5", "--n-lambda", "20",
            "--out-prefix", str(tmp_path / "ts"),
        ])
        assert rc == 0
        doc = json.loads((tmp_path / "ts_report.json").read_text())
        assert doc["schema_version"] == 1
        selected = list(csv.DictReader(open(tmp_path / "ts_selected.csv")))
        assert [int(r["variable"]) for r in selected] == doc["selected_variables"]

    def test_pipeline_equivalence_with_fit(self, tmp_path):
        # two-stage on narrow data, then `fit` with the emitted partition,
        # must select the same variables
        data, schema = write_regression_data(tmp_path, seed=9, n=60, p=6)
        rc = main([
            "two-stage", "--data", str(data), "--schema", str(schema),
            "--j-boot", "5", "--cv", "5", "--n-lambda", "20", "--seed", "21",
            "--out-prefix", str(tmp_path / "ts"),
        ])
        assert rc == 0
        doc = json.loads((tmp_path / "ts_report.json").read_text())
        groups = write_groups(
            tmp_path, [f"x{j}" for j in range(6)], doc["partition"]["assignment"]
        )
        rc = main([
            "fit", "--data", str(data), "--schema", str(schema),
            "--family", "grlasso", "--groups", str(groups),
            "--cv", "5", "--n-lambda", "20", "--seed", "22",
            "--out-prefix", str(tmp_path / "fit"),
        ])
        assert rc == 0
        fit_doc = json.loads((tmp_path / "fit_path.json").read_text())
        names = [f"x{j}" for j in doc["selected_variables"]]
        assert fit_doc["selected_variables"] == names


class TestSimulateCommand:
    def test_deterministic_output(self, tmp_path):
        args = [
            "simulate", "--design", "1", "--rho", "0.8", "--replicates", "2",
            "--seed", "7", "--families", "grlasso", "--j-boot", "5",
            "--cv", "5", "--n-lambda", "15", "--jobs", "1",
        ]
        out1, out2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_export_instance(self, tmp_path):
        rc = main([
            "simulate", "--design", "2", "--rho", "0.5", "--seed", "3",
            "--export-instance", str(tmp_path / "inst"),
        ])
        assert rc == 0
        truth = json.loads((tmp_path / "inst.truth.json").read_text())
        assert len(truth["blocks"]) == 50
        from groupsel.data import load_csv

        ds = load_csv(tmp_path / "inst.csv", tmp_path / "inst.schema.json")
        assert ds.p == 50


class TestSmoteCommand:
    def test_balances_minority(self, tmp_path):
        rng = np.random.default_rng(10)
        n1, n0 = 24, 76
        x = rng.standard_normal((n1 + n0, 3))
        y = np.concatenate([np.ones(n1), np.zeros(n0)])
        ds = Dataset(
            tuple(Variable(f"x{j}", "quantitative", x[:, j]) for j in range(3)), y, "binary"
        )
        data, schema = tmp_path / "s.csv", tmp_path / "s.schema.json"
        save_csv(ds, data, schema)
        out = tmp_path / "smote.csv"
        rc = main([
            "smote", "--data", str(data), "--schema", str(schema),
            "--out", str(out), "--seed", "4",
        ])
        assert rc == 0
        rows = list(csv.DictReader(open(out)))
        assert len(rows) == 152
        synth = [r for r in rows if r["synthetic"] == "1"]
        assert len(synth) == 52
        assert all(r["y"] == "1.0" for r in synth)

    def test_qualitative_rejected(self, tmp_path):
        rng = np.random.default_rng(11)
        ds = Dataset(
            (
                Variable("q", "qualitative", rng.integers(0, 2, 30), ("a", "b")),
                Variable("x", "quantitative", rng.standard_normal(30)),
            ),
            rng.integers(0, 2, 30).astype(float),
            "binary",
        )
        data, schema = tmp_path / "q.csv", tmp_path / "q.schema.json"
        save_csv(ds, data, schema)
        rc = main([
            "smote", "--data", str(data), "--schema", str(schema),
            "--out", str(tmp_path / "o.csv"),
        ])
        assert rc == 2


class TestMetricsCommand:
    def test_regression(self, tmp_path):
        pred = tmp_path / "pred.csv"
        pred.write_text("y_true,y_pred\n1,1\n2,4\n3,3\n")
        out = tmp_path / "m.json"
        rc = main(["metrics", "--kind", "regression", "--pred", str(pred),
                   "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["rmse"] == pytest.approx(np.sqrt(4 / 3))

    def test_classification(self, tmp_path):
        pred = tmp_path / "pred.csv"
        pred.write_text("y_true,score\n1,0.9\n0,0.2\n1,0.5\n0,0.6\n")
        out = tmp_path / "m.json"
        rc = main(["metrics", "--kind", "classification", "--pred", str(pred),
                   "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["auc"] == pytest.approx(0.75)

    def test_selection_modes(self, tmp_path):
        out = tmp_path / "m.json"
        rc = main([
            "metrics", "--kind", "selection", "--p", "5",
            "--active", "0,1,2", "--selected", "0,1,3", "--out", str(out),
        ])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["sensitivity"] == pytest.approx(2 / 3)
        assert doc["specificity"] == pytest.approx(1 / 2)
        rc = main([
            "metrics", "--kind", "selection", "--p", "5",
            "--active", "0,1,2", "--selected", "0,1,3", "--as-printed",
            "--out", str(out),
        ])
        doc = json.loads(out.read_text())
        assert doc["sensitivity"] == pytest.approx(2 / 5)

    def test_selection_requires_p(self, tmp_path):
        rc = main([
            "metrics", "--kind", "selection", "--active", "0",
            "--selected", "0", "--out", str(tmp_path / "m.json"),
        ])
        assert rc == 2


def test_help_lists_all_commands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for cmd in ("fit", "two-stage", "cluster", "screen", "simulate", "smote", "metrics"):
        assert cmd in out


@pytest.mark.parametrize(
    "command,expectations",
    [
        ("fit", ["--cv", "default 10", "--n-lambda", "default 100", "3.7"]),
        ("two-stage", ["--j-boot", "default 50", "--max-candidates", "default 30"]),
        ("screen", ["--k-factor", "k=1"]),
        ("simulate", ["--replicates", "--jobs"]),
        ("smote", ["--k-neighbors", "--target-ratio", "default 1.0"]),
    ],
)
def test_subcommand_help_shows_defaults(capsys, command, expectations):
    with pytest.raises(SystemExit) as exc:
        main([command, "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for fragment in expectations:
        assert fragment in out
