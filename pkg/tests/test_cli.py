import json

from delayqpt.cli import main
from delayqpt.report import ReconstructionReport


def write_report(path, value, n):
    ReconstructionReport("single", {}, [float(value)] * n, {"h": value},
                         {"final_loss": value}).to_json(path)
    return str(path)


def test_presets_list(capsys):
    assert main(["presets", "list"]) == 0
    assert "fig5a-single" in capsys.readouterr().out


def test_simulate_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "--preset", "fig5a-single", "--trials", "2", "--seed", "4",
                     "--out", str(tmp_path / name)]) == 0
    for rel in ("trial_000/trajectory.csv", "trial_001/trajectory.csv",
                "trial_001/trajectory.meta.json", "config.json"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_reconstruct_from_trajectory(tmp_path, capsys):
    main(["simulate", "--preset", "fig5a-single", "--trials", "1", "--out", str(tmp_path / "s")])
    out = tmp_path / "r"
    code = main(["reconstruct", "--preset", "fig5a-single", "--out", str(out),
                 "--trajectory", str(tmp_path / "s" / "trial_000" / "trajectory.csv")])
    assert code == 0
    errors = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert errors["h"] < 1e-8
    assert (out / "report.json").exists() and (out / "history.csv").exists()


def test_reconstruct_trials_writes_aggregate(tmp_path):
    out = tmp_path / "r"
    assert main(["reconstruct", "--preset", "fig5a-single", "--trials", "3", "--jobs", "1",
                 "--out", str(out)]) == 0
    assert len(list(out.glob("trial_*/report.json"))) == 3
    assert (out / "aggregate_summary.csv").read_text().startswith("quantity,median,q25,q75")


def test_config_errors_exit_2(tmp_path):
    assert main(["reconstruct", "--preset", "nope"]) == 2
    assert main(["simulate"]) == 2
    assert main(["simulate", "--bogus"]) == 2
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"preset": "fig5a-single", "hamiltonian": str(tmp_path / "no.json")}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_optimization_failure_exit_3(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"preset": "fig6-partial", "trials": 1, "options": {"restarts": 2},
                               "optimizer": {"learning_rate": 1e308, "epochs": 5}}))
    assert main(["reconstruct", "--config", str(cfg), "--jobs", "1",
                 "--out", str(tmp_path / "o")]) == 3


def test_aggregate_median(tmp_path, capsys):
    paths = [write_report(tmp_path / f"{v}.json", v, 4) for v in (1.0, 2.0, 4.0)]
    prefix = tmp_path / "agg"
    assert main(["aggregate", *paths, "--out", str(prefix)]) == 0
    hist = (tmp_path / "agg_history.csv").read_text().splitlines()
    assert hist[0].startswith("epoch,loss_median")
    assert all(row.split(",")[1] == "2" for row in hist[1:])
    assert "final_loss,2," in capsys.readouterr().out


def test_aggregate_misaligned_exit_2(tmp_path):
    paths = [write_report(tmp_path / "a.json", 1.0, 4), write_report(tmp_path / "b.json", 1.0, 5)]
    assert main(["aggregate", *paths, "--out", str(tmp_path / "agg")]) == 2
    assert main(["aggregate", str(tmp_path / "missing.json")]) == 2
