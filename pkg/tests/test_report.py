import numpy as np

from delayqpt.report import ReconstructionReport, relative_error


def test_json_roundtrip_is_exact(tmp_path):
    x = np.random.default_rng(0).standard_normal(5)
    rep = ReconstructionReport("partial", {"h": x}, list(x), {"h": 0.1}, {"final_loss": 1e-30})
    rep.to_json(tmp_path / "r.json")
    back = ReconstructionReport.from_json(tmp_path / "r.json")
    assert np.array_equal(back.params["h"], x)
    assert back.to_json() == rep.to_json()
    assert back.final_loss == 1e-30


def test_history_csv_columns():
    rep = ReconstructionReport("lattice-uniform", {}, [3.0, 2.0], {}, {},
                               {"J_error": [0.5, 0.25], "short": [1.0]})
    lines = rep.history_csv().splitlines()
    assert lines[0] == "epoch,loss,J_error"
    assert lines[2] == "1,2,0.25"


def test_relative_error_zero_truth():
    assert relative_error([3.0, 4.0], [0.0, 0.0]) == 5.0
    assert abs(relative_error([1.1], [1.0]) - 0.1) < 1e-15
