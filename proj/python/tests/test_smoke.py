import json

import numpy as np
import pytest

import defcalib as dc

CONFIG = {
    "schema_version": 1,
    "kind": "synth_config",
    "target": {"rows": 6, "cols": 9, "spacing": 0.1},
    "intrinsics": {"fx": 1000, "fy": 1010, "ppx": 640, "ppy": 480, "k1": -0.12, "k2": 0.06, "k3": -0.01},
    "frames": 25,
    "seed": 3,
}


def scenario(**extra):
    cfg = dict(CONFIG, **extra)
    return dc.synthesize(json.dumps(cfg))


def test_noiseless_standard_calibration():
    data, truth, _ = scenario()
    assert len(data) == 25
    assert data.observation_count == 25 * 54
    result = dc.calibrate(data)
    assert result.ok
    assert result.rmse < 1e-6
    np.testing.assert_allclose(result.intrinsics.to_list(), truth.truth_intrinsics.to_list(), rtol=1e-6, atol=1e-9)


def test_dynamic_method_recovers_deformation():
    data, truth, truth_json = scenario(
        deformation={"regime": "dynamic", "dynamic_min_amplitude": 0.001, "dynamic_amplitude": 0.003}
    )
    result = dc.calibrate(data, method="dynamic")
    assert result.betas.shape == (25, 3)
    np.testing.assert_allclose(result.betas, truth.betas, rtol=0.05, atol=1e-6)
    assert json.loads(truth_json)["kind"] == "ground_truth"


def test_metrics():
    a = dc.Intrinsics(1000, 1000, 640, 480)
    b = dc.Intrinsics(1000, 1000, 642, 480)
    assert dc.mapping_error(a, a) == 0.0
    assert dc.mapping_error(a, b) == pytest.approx(2.0, rel=1e-12)
    data, truth, _ = scenario(noise_sigma=0.1, seed=4)
    assert dc.test_error(truth.truth_intrinsics, data) == pytest.approx(0.1, rel=0.15)


def test_projection_round_trip():
    intr = dc.Intrinsics(1000, 1010, 640, 480, -0.12, 0.06, -0.01)
    x = intr.unproject([100.0, 200.0], depth=2.0)
    assert x[2] == pytest.approx(2.0)
    np.testing.assert_allclose(intr.project(x), [100.0, 200.0], atol=1e-9)


def test_dataset_round_trip(tmp_path):
    data, _, _ = scenario(noise_sigma=0.2)
    path = tmp_path / "d.json"
    data.save(str(path))
    back = dc.Dataset.load(str(path))
    assert back.to_json() == data.to_json()
    table = back.observations(0)
    assert table.shape == (54, 4)
    assert len(back.subset([0, 2, 4])) == 3


def test_subsets_and_compare():
    data, _, _ = scenario(frames=40)
    reports = [dc.calibrate_subsets(data, m, subsets=3, subset_size=20, seed=1) for m in ("dynamic", "standard")]
    assert len(json.loads(reports[0])["runs"]) == 3
    rows = dc.compare(reports).splitlines()
    assert len(rows) == 3
    assert rows[1].split(",")[1] == "standard"
    assert rows[2].split(",")[1] == "dynamic"


def test_errors():
    with pytest.raises(dc.CalibError, match="schema"):
        dc.synthesize("{}")
    data, _, _ = scenario(frames=1)
    with pytest.raises(dc.CalibError):
        dc.calibrate(data, method="wobbly")


def test_cli(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(CONFIG))
    code, out, _ = dc.run_cli(["synth", str(cfg), "-o", str(tmp_path / "d.json")])
    assert code == 0
    assert "25 frames" in out
    code, _, err = dc.run_cli(["calibrate", str(tmp_path / "d.json"), "-m", "nope", "-o", str(tmp_path / "r.json")])
    assert code == 1
    assert err
