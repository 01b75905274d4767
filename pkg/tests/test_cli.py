import csv
import json
import os

import pytest

from sirmnn.cli import main


def run(argv, env=None, monkeypatch=None):
    if env and monkeypatch:
        for k, v in env.items():
            monkeypatch.setenv(k, v)
    return main(argv)


@pytest.fixture()
def scenario_dir(tmp_path):
    out = tmp_path / "sc"
    rc = main([
        "scenario", "--panel", "a", "--n", "400", "--m", "40",
        "--eval-n", "200", "--seed", "7", "--out", str(out),
    ])
    assert rc == 0
    return out


class TestScenario:
    def test_writes_expected_files(self, scenario_dir):
        names = sorted(os.listdir(scenario_dir))
        assert names == ["eval.csv", "problem.json", "source.csv", "target_labeled.csv", "target_unlabeled.csv"]
        with open(scenario_dir / "source.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 401  # header + n

    def test_deterministic_bytes(self, tmp_path):
        outs = []
        for name in ("s1", "s2"):
            out = tmp_path / name
            assert main(["scenario", "--panel", "c", "--n", "100", "--m", "10", "--seed", "3", "--out", str(out)]) == 0
            outs.append(out)
        for fname in ("problem.json", "source.csv", "target_labeled.csv"):
            assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()

    def test_invalid_panel_exits_2(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["scenario", "--panel", "z", "--out", str(tmp_path / "x")])
        assert exc.value.code == 2

    def test_spec_path_missing_exits_2(self, tmp_path):
        rc = main(["scenario", "--spec", str(tmp_path / "nope.json"), "--out", str(tmp_path / "y")])
        assert rc == 2


class TestTrain:
    def test_source_only(self, scenario_dir, tmp_path, capsys):
        out = tmp_path / "t.json"
        rc = main([
            "train", "--regime", "source-only", "--panel", "a",
            "--source", str(scenario_dir / "source.csv"),
            "--eval", str(scenario_dir / "eval.csv"),
            "--out", str(out),
        ])
        assert rc == 0
        stdout = capsys.readouterr().out.strip()
        summary = json.loads(stdout)
        assert summary["chosen_map_index"] == 1
        assert "target_risk" in summary
        body = json.loads(out.read_text())
        assert body["regime"] == "source-only"
        assert len(body["diagnostics"]) == 2

    def test_unlabeled_regime(self, tmp_path, capsys):
        sc = tmp_path / "scb"
        assert main(["scenario", "--panel", "b", "--n", "600", "--m", "40", "--seed", "5", "--out", str(sc)]) == 0
        out = tmp_path / "t2.json"
        rc = main([
            "train", "--regime", "unlabeled", "--panel", "b",
            "--source", str(sc / "source.csv"),
            "--target", str(sc / "target_unlabeled.csv"),
            "--out", str(out),
        ])
        assert rc == 0
        assert json.loads(capsys.readouterr().out)["chosen_map_index"] == 1

    def test_validate_regime(self, tmp_path, capsys):
        sc = tmp_path / "scc"
        assert main(["scenario", "--panel", "c", "--n", "800", "--m", "25", "--seed", "6", "--out", str(sc)]) == 0
        out = tmp_path / "t3.json"
        rc = main([
            "train", "--regime", "validate", "--panel", "c",
            "--source", str(sc / "source.csv"),
            "--target", str(sc / "target_labeled.csv"),
            "--out", str(out),
        ])
        assert rc == 0
        assert json.loads(capsys.readouterr().out)["chosen_map_index"] == 1

    def test_missing_file_exits_2(self, tmp_path, capsys):
        rc = main([
            "train", "--regime", "source-only", "--panel", "a",
            "--source", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o.json"),
        ])
        assert rc == 2
        assert "missing.csv" in capsys.readouterr().err

    def test_regime_input_mismatch_exits_2(self, scenario_dir, tmp_path):
        # labeled CSV fed to the unlabeled regime: header mismatch
        rc = main([
            "train", "--regime", "unlabeled", "--panel", "a",
            "--source", str(scenario_dir / "source.csv"),
            "--target", str(scenario_dir / "target_labeled.csv"),
            "--out", str(tmp_path / "o.json"),
        ])
        assert rc == 2

    def test_singleton_family_spec(self, tmp_path, capsys):
        # custom problem JSON whose family has one map: that map is chosen
        from sirmnn.featuremaps import FeatureFamily, identity_map
        from sirmnn.scenarios import ShiftProblem, figure1_panel

        base = figure1_panel("a")
        prob = ShiftProblem(base.source, base.target, FeatureFamily((identity_map(2),)))
        spec_path = tmp_path / "single.json"
        prob.save(spec_path)
        sc = tmp_path / "sc1"
        assert main(["scenario", "--spec", str(spec_path), "--n", "200", "--seed", "4", "--out", str(sc)]) == 0
        out = tmp_path / "single_train.json"
        rc = main([
            "train", "--regime", "source-only", "--spec", str(spec_path),
            "--source", str(sc / "source.csv"), "--out", str(out),
        ])
        assert rc == 0
        assert json.loads(capsys.readouterr().out)["chosen_map_index"] == 0

    def test_fixed_epsilon_mode(self, scenario_dir, tmp_path):
        out = tmp_path / "t4.json"
        rc = main([
            "train", "--regime", "source-only", "--panel", "a",
            "--source", str(scenario_dir / "source.csv"),
            "--epsilon-mode", "fixed:0.25", "--out", str(out),
        ])
        assert rc == 0
        assert json.loads(out.read_text())["epsilon"] == 0.25

    def test_bad_epsilon_mode(self, scenario_dir, tmp_path):
        rc = main([
            "train", "--regime", "source-only", "--panel", "a",
            "--source", str(scenario_dir / "source.csv"),
            "--epsilon-mode", "sometimes", "--out", str(tmp_path / "o.json"),
        ])
        assert rc == 2


class TestSweep:
    def sweep_args(self, tmp_path, tag):
        return [
            "sweep", "--panel", "a", "--regime", "source-only",
            "--grid-n", "100,200", "--trials", "2", "--eval-n", "300",
            "--seed", "9",
            "--out-csv", str(tmp_path / f"rec{tag}.csv"),
            "--out-json", str(tmp_path / f"sum{tag}.json"),
        ]

    def test_record_count_and_schema(self, tmp_path):
        assert main(self.sweep_args(tmp_path, "a")) == 0
        with open(tmp_path / "reca.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4  # 2 cells x 2 trials
        assert all(r["status"] == "ok" for r in rows)
        summary = json.loads((tmp_path / "suma.json").read_text())
        assert {c["n"] for c in summary["cells"]} == {100, 200}
        for cell in summary["cells"]:
            assert "target_risk_median" in cell
            assert cell["trials"] == 2

    def test_byte_identical_across_thread_counts(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SIRM_THREADS", "1")
        assert main(self.sweep_args(tmp_path, "b")) == 0
        monkeypatch.setenv("SIRM_THREADS", "8")
        assert main(self.sweep_args(tmp_path, "c")) == 0
        assert (tmp_path / "recb.csv").read_bytes() == (tmp_path / "recc.csv").read_bytes()
        assert (tmp_path / "sumb.json").read_bytes() == (tmp_path / "sumc.json").read_bytes()

    def test_single_cell_matches_train(self, tmp_path):
        """A 1x1 sweep record equals a train run on identically sampled data."""
        from sirmnn.core import SeedSpec, save_csv
        from sirmnn.scenarios import figure1_panel, sample

        rc = main([
            "sweep", "--panel", "a", "--regime", "source-only",
            "--grid-n", "300", "--trials", "1", "--eval-n", "400", "--seed", "11",
            "--out-csv", str(tmp_path / "one.csv"),
            "--out-json", str(tmp_path / "one.json"),
        ])
        assert rc == 0
        with open(tmp_path / "one.csv") as fh:
            (record,) = list(csv.DictReader(fh))

        # rebuild the trial's exact sample streams (cell 0, trial 0)
        prob = figure1_panel("a")
        sub = SeedSpec(11).substream(0, 0)
        save_csv(sample(prob.source, 300, sub.substream(0)), tmp_path / "src.csv")
        save_csv(sample(prob.target, 400, sub.substream(2)), tmp_path / "ev.csv")
        rc = main([
            "train", "--regime", "source-only", "--panel", "a",
            "--source", str(tmp_path / "src.csv"),
            "--eval", str(tmp_path / "ev.csv"),
            "--out", str(tmp_path / "train.json"),
        ])
        assert rc == 0
        body = json.loads((tmp_path / "train.json").read_text())
        assert int(record["chosen_map"]) == body["chosen_map_index"]
        assert float(record["target_risk"]) == pytest.approx(body["target_risk"])

    def test_regime_needs_grid_m(self, tmp_path):
        rc = main([
            "sweep", "--panel", "b", "--regime", "unlabeled",
            "--grid-n", "100", "--trials", "1",
            "--out-csv", str(tmp_path / "x.csv"), "--out-json", str(tmp_path / "x.json"),
        ])
        assert rc == 2


@pytest.mark.slow
def test_sweep_risk_curve_non_increasing(tmp_path):
    """Median target risk does not increase across the n grid."""
    rc = main([
        "sweep", "--panel", "a", "--regime", "source-only",
        "--grid-n", "250,1000,4000", "--trials", "20", "--eval-n", "1000",
        "--seed", "13",
        "--out-csv", str(tmp_path / "r.csv"), "--out-json", str(tmp_path / "s.json"),
    ])
    assert rc == 0
    with open(tmp_path / "r.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 60
    summary = json.loads((tmp_path / "s.json").read_text())
    med = {c["n"]: c["target_risk_median"] for c in summary["cells"]}
    steps = [(250, 1000), (1000, 4000)]
    assert sum(med[b] <= med[a] for a, b in steps) >= 2


class TestPlot:
    def test_empty_records(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("learner,n,m,trial,chosen_map,fallback,source_risk,target_risk,status\n")
        out = tmp_path / "p.svg"
        assert main(["plot", "--records", str(path), "--out", str(out)]) == 0
        body = out.read_text()
        assert body.startswith("<svg")
        assert "no data" in body

    def test_deterministic_bytes(self, tmp_path):
        assert main([
            "sweep", "--panel", "a", "--regime", "source-only",
            "--grid-n", "100,200", "--trials", "2", "--eval-n", "200", "--seed", "2",
            "--out-csv", str(tmp_path / "r.csv"), "--out-json", str(tmp_path / "s.json"),
        ]) == 0
        for tag in ("p1", "p2"):
            assert main(["plot", "--records", str(tmp_path / "r.csv"), "--out", str(tmp_path / f"{tag}.svg")]) == 0
        assert (tmp_path / "p1.svg").read_bytes() == (tmp_path / "p2.svg").read_bytes()
        body = (tmp_path / "p1.svg").read_text()
        assert "risk vs n" in body and "selection frequency" in body
        assert body.count("<path") == 1  # one curve per learner present

    def test_schema_mismatch_exits_2(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        rc = main(["plot", "--records", str(path), "--out", str(tmp_path / "x.svg")])
        assert rc == 2


class TestDdprobe:
    def test_cor_4_2(self, tmp_path, capsys):
        out = tmp_path / "dd.json"
        rc = main([
            "ddprobe", "--family", "cor:4,2", "--quads", "30",
            "--sizes", "1,2,3,4,5", "--seed", "5", "--out", str(out),
        ])
        assert rc == 0
        report = json.loads(out.read_text())
        assert report["dd_upper"] == 4.0
        by_size = {r["size"]: r["status"] for r in report["results"]}
        assert by_size[5] == "none"

    def test_singleton_family_nothing_shatters(self, tmp_path):
        out = tmp_path / "dd1.json"
        fam_path = tmp_path / "fam.json"
        from sirmnn.featuremaps import FeatureFamily, coordinate_map

        FeatureFamily((coordinate_map(3, [0]),)).save(fam_path)
        rc = main([
            "ddprobe", "--family", str(fam_path), "--quads", "10",
            "--sizes", "1,2", "--seed", "1", "--out", str(out),
        ])
        assert rc == 0
        report = json.loads(out.read_text())
        assert all(r["status"] == "none" for r in report["results"])

    def test_proj_bound_row(self, tmp_path):
        out = tmp_path / "dd2.json"
        rc = main([
            "ddprobe", "--family", "proj:3,2,8", "--quads", "12",
            "--sizes", "1,2,3", "--seed", "2", "--out", str(out),
        ])
        assert rc == 0
        report = json.loads(out.read_text())
        assert report["dd_upper"] == 9.0
        assert report["family"]["size"] == 8

    def test_budget_inconclusive_exit_0(self, tmp_path):
        out = tmp_path / "dd3.json"
        rc = main([
            "ddprobe", "--family", "cor:5,2", "--quads", "40",
            "--sizes", "3", "--budget", "5", "--seed", "3", "--out", str(out),
        ])
        assert rc == 0
        report = json.loads(out.read_text())
        assert report["results"][0]["status"] == "inconclusive"


class TestEnvThreads:
    def test_bad_env_value(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SIRM_THREADS", "many")
        rc = main([
            "sweep", "--panel", "a", "--regime", "source-only",
            "--grid-n", "50", "--trials", "1",
            "--out-csv", str(tmp_path / "x.csv"), "--out-json", str(tmp_path / "x.json"),
        ])
        assert rc == 2
