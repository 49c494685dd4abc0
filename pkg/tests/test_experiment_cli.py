import json

import numpy as np
import pytest

from tvpwl.cli import main
from tvpwl.experiment import ExperimentError, RunConfig, Stage, load_run_config, run_experiment
from tvpwl.io import read_csv, read_grid, read_pgm, write_csv

FAST = {"max_iters": 3000, "tol": 1e-5}


def small_cfg(tmp_path, **kw):
    d = {
        "synth": {"kind": "signal", "n": 200},
        "noise": {"std": 0.1, "seed": 3},
        "solver": FAST,
        "pipeline": {"smooth_1d": {"window": 20}},
        "output_dir": str(tmp_path / "out"),
    }
    d.update(kw)
    return d


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        RunConfig(regularizers=["TV", "L1"])
    with pytest.raises(ValueError):
        RunConfig(regularizers=[])
    with pytest.raises(ValueError):
        RunConfig(eps=-1.0)
    with pytest.raises(ValueError):
        RunConfig(gamma="guess")
    with pytest.raises(ValueError):
        RunConfig(noise={"std": -0.1})
    assert RunConfig(regularizers=["tv", "TV", "tgv2"]).regularizers == ["TV", "TGV2"]


def test_config_file_roundtrip(tmp_path):
    cfg = RunConfig.from_dict(small_cfg(tmp_path))
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert load_run_config(p) == cfg


def test_manifest_lists_every_stage(tmp_path):
    m = run_experiment(small_cfg(tmp_path))
    out = tmp_path / "out"
    names = set(m["artifacts"])
    expected = {"ground_truth", "noisy", "u_tv", "residual", "smoothed_residual", "derivative_0", "gamma"}
    expected |= {f"recon_{k}" for k in ("TV", "TV_PWL", "TGV2")}
    assert expected <= names
    for entry in m["artifacts"].values():
        vals, _ = read_csv(out / entry["path"])
        assert list(vals.shape) == entry["shape"] == [200]
    on_disk = json.loads((out / "manifest.json").read_text())
    assert on_disk == json.loads(json.dumps(m))
    assert set(m["metrics"]["vs_ground_truth"]) == {"noisy", "TV", "TV_PWL", "TGV2"}
    assert set(m["metrics"]["cross_ssim"]) == {"TV|TV_PWL", "TV|TGV2", "TV_PWL|TGV2"}
    for k in ("TV", "TV_PWL", "TGV2"):
        assert m["metrics"]["discrepancy"][k] <= m["eps"] * (1 + 1e-3)
        assert m["reports"][k]["iterations"] > 0


def test_zero_noise_null_set_reproduces_input(tmp_path):
    cfg = small_cfg(
        tmp_path,
        synth={"kind": "signal", "n": 100, "segments": [{"kind": "constant", "start": 0.0, "end": 1.0, "value": 1.5}]},
        noise={"std": 0.0},
        regularizers=["TV_PWL"],
        gamma=0.0,
    )
    m = run_experiment(cfg)
    assert m["eps"] == 0.0
    u = read_grid(tmp_path / "out" / "recon_TV_PWL.csv")
    np.testing.assert_array_equal(u.values, 1.5)
    q = m["metrics"]["vs_ground_truth"]["TV_PWL"]
    assert q["ssim"] == 1.0 and q["psnr"] == "inf" and q["mse"] == 0.0


def test_exact_gamma_beats_noisy(tmp_path):
    m = run_experiment(small_cfg(tmp_path, regularizers=["TV_PWL"], gamma="exact"))
    q = m["metrics"]["vs_ground_truth"]
    assert q["TV_PWL"]["ssim"] >= q["noisy"]["ssim"]
    assert "u_tv" not in m["artifacts"]


def test_manifest_byte_identical(tmp_path):
    a = small_cfg(tmp_path, regularizers=["TV_PWL"], output_dir=str(tmp_path / "a"))
    b = dict(a, output_dir=str(tmp_path / "b"))
    run_experiment(a)
    run_experiment(b)
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()
    for name in ("gamma.csv", "recon_TV_PWL.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_image_run_writes_previews(tmp_path):
    cfg = small_cfg(
        tmp_path,
        synth={"kind": "image", "n": 32},
        noise={"std": 10.0, "seed": 0},
        regularizers=["TV"],
        gamma=0.0,
        solver={"max_iters": 300, "tol": 1e-4},
    )
    m = run_experiment(cfg)
    out = tmp_path / "out"
    for name in ("ground_truth", "noisy", "recon_TV"):
        entry = m["artifacts"][name]
        assert entry["shape"] == [32, 32]
        assert read_pgm(out / entry["preview"]).shape == (32, 32)
        assert (out / entry["preview_sidecar"]).exists()
    assert m["metrics"]["dynamic_range"] == 255.0
    # gamma is neither needed nor estimated, so it is not written.
    assert "gamma" not in m["artifacts"]


def test_file_input_run(tmp_path):
    f = np.concatenate([np.zeros(50), np.ones(50)]) + np.random.default_rng(0).normal(0, 0.05, 100)
    write_csv(tmp_path / "f.csv", f, header="spacing=0.01")
    m = run_experiment(
        small_cfg(tmp_path, input=str(tmp_path / "f.csv"), input_is_noisy=True, noise={"std": 0.05}, regularizers=["TV"], gamma=0.0)
    )
    assert m["geometry"] == {"dims": [100], "spacing": [0.01]}
    assert "vs_ground_truth" not in m["metrics"]


def test_exact_gamma_needs_synth(tmp_path):
    write_csv(tmp_path / "f.csv", np.zeros(20))
    cfg = small_cfg(tmp_path, input=str(tmp_path / "f.csv"), gamma="exact")
    with pytest.raises(ExperimentError, match=r"^\[gamma\]"):
        run_experiment(cfg)


def test_stage_wraps_errors():
    with pytest.raises(ExperimentError) as info:
        with Stage("load"):
            raise KeyError("x")
    assert info.value.stage == "load"
    assert str(info.value).startswith("[load] KeyError")


# ---- CLI ----


def test_cli_pipeline(tmp_path, capsys):
    d = tmp_path
    assert main(["synth", "--n", "200", "-o", str(d / "u.csv"), "--derivative", str(d / "du.csv")]) == 0
    assert read_grid(d / "u.csv").geometry.spacing == (0.04,)
    assert main(["add-noise", str(d / "u.csv"), "--std", "0.1", "--seed", "1", "-o", str(d / "f.csv")]) == 0
    assert main(["estimate-gamma", str(d / "f.csv"), "--window", "20", "-o", str(d / "g.csv"), "--max-iters", "3000"]) == 0
    g = read_grid(d / "g.csv")
    assert g.geometry.dims == (200,) and np.all(g.values >= 0)
    args = ["denoise", str(d / "f.csv"), "--reg", "tvpwl", "--gamma", str(d / "g.csv"), "--sigma", "0.1"]
    assert main(args + ["-o", str(d / "r.csv"), "--report", str(d / "rep.json"), "--max-iters", "3000"]) == 0
    rep = json.loads((d / "rep.json").read_text())
    assert rep["iterations"] > 0
    capsys.readouterr()
    assert main(["compare", str(d / "r.csv"), str(d / "u.csv")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert {"ssim", "psnr", "mse"} <= set(out)
    main(["compare", str(d / "f.csv"), str(d / "u.csv")])
    assert out["ssim"] > json.loads(capsys.readouterr().out)["ssim"]


def test_cli_run(tmp_path, capsys):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(small_cfg(tmp_path, regularizers=["TV"], gamma=0.0)))
    assert main(["run", str(p), "--output-dir", str(tmp_path / "cli_out")]) == 0
    assert (tmp_path / "cli_out" / "manifest.json").exists()
    assert "discrepancy" in json.loads(capsys.readouterr().out)


def test_cli_errors_are_stage_tagged(tmp_path, capsys):
    assert main(["denoise", str(tmp_path / "missing.csv"), "--reg", "tv", "--sigma", "0.1", "-o", str(tmp_path / "x.csv")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("tvpwl: [")
    (tmp_path / "bad.csv").write_text("1\nfoo\n")
    assert main(["add-noise", str(tmp_path / "bad.csv"), "--std", "1", "-o", str(tmp_path / "y.csv")]) == 2
    assert ":2:" in capsys.readouterr().err
    p = tmp_path / "cfg.json"
    p.write_text("{not json")
    assert main(["run", str(p)]) == 2


def test_cli_rejects_penalized_tgv(tmp_path, capsys):
    write_csv(tmp_path / "f.csv", np.zeros(20))
    code = main(["denoise", str(tmp_path / "f.csv"), "--reg", "tgv", "--alpha", "1.0", "-o", str(tmp_path / "x.csv")])
    assert code == 2
    assert "tvpwl: [" in capsys.readouterr().err
