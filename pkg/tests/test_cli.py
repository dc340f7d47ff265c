"""Command-line interface: outputs, determinism, manifest round-trip."""

import json

from mesopop.cli import main


MESO_CFG = {
    "simulator": "meso",
    "params": {"N": 50, "tau_m": 0.02, "mu": 20.0, "J": 0.0,
               "f": {"kind": "exponential", "c": 10.0, "theta": 10.0,
                     "delta_u": 1.0}},
    "duration": 1.0,
    "dt": 1e-3,
    "seed": 5,
    "lambda_mode": {"kind": "full"},
}


def _write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    with open(p, "w") as fh:
        json.dump(cfg, fh)
    return p


def test_meso_run_outputs(tmp_path):
    cfg = dict(MESO_CFG, out=str(tmp_path / "run"))
    rc = main(["meso", "--config", str(_write_cfg(tmp_path, cfg)), "--no-plot"])
    assert rc == 0
    trace = tmp_path / "run" / "trace.csv"
    assert trace.exists()
    raw = trace.read_bytes()
    assert b"\r" not in raw  # LF endings
    lines = raw.decode("utf-8").splitlines()
    assert lines[0] == "t,A,Abar,mass,P_Lambda"
    assert len(lines) == 1 + 1000
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["seed"] == 5
    assert manifest["config"]["params"]["N"] == 50
    assert "code_version" in manifest and "wall_time_s" in manifest


def test_identical_config_byte_identical(tmp_path):
    cfg_a = dict(MESO_CFG, out=str(tmp_path / "a"))
    cfg_b = dict(MESO_CFG, out=str(tmp_path / "b"))
    assert main(["meso", "--config", str(_write_cfg(tmp_path, cfg_a, "a.json")),
                 "--no-plot"]) == 0
    assert main(["meso", "--config", str(_write_cfg(tmp_path, cfg_b, "b.json")),
                 "--no-plot"]) == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() == \
        (tmp_path / "b" / "trace.csv").read_bytes()


def test_manifest_roundtrip(tmp_path):
    cfg = dict(MESO_CFG, out=str(tmp_path / "orig"))
    assert main(["meso", "--config", str(_write_cfg(tmp_path, cfg)),
                 "--no-plot"]) == 0
    manifest = tmp_path / "orig" / "manifest.json"
    assert main(["meso", "--config", str(manifest), "--out",
                 str(tmp_path / "redo"), "--no-plot"]) == 0
    assert (tmp_path / "orig" / "trace.csv").read_bytes() == \
        (tmp_path / "redo" / "trace.csv").read_bytes()


def test_unknown_key_rejected(tmp_path):
    cfg = dict(MESO_CFG, out=str(tmp_path / "x"), typo_key=1)
    rc = main(["meso", "--config", str(_write_cfg(tmp_path, cfg))])
    assert rc == 1


def test_unknown_param_key_rejected(tmp_path):
    cfg = dict(MESO_CFG, out=str(tmp_path / "x"))
    cfg["params"] = dict(cfg["params"], oops=3)
    rc = main(["meso", "--config", str(_write_cfg(tmp_path, cfg))])
    assert rc == 1


def test_wrong_simulator_rejected(tmp_path):
    cfg = dict(MESO_CFG, out=str(tmp_path / "x"))
    rc = main(["micro", "--config", str(_write_cfg(tmp_path, cfg))])
    assert rc == 1


def test_numerical_abort_exit_code(tmp_path):
    cfg = dict(MESO_CFG, out=str(tmp_path / "x"))
    cfg["params"] = dict(cfg["params"], J=1e308)
    rc = main(["meso", "--config", str(_write_cfg(tmp_path, cfg)),
               "--no-plot"])
    assert rc == 2


def test_flag_overrides(tmp_path):
    cfg = dict(MESO_CFG, out=str(tmp_path / "x"))
    rc = main(["meso", "--config", str(_write_cfg(tmp_path, cfg)),
               "--seed", "9", "--duration", "0.5", "--no-plot"])
    assert rc == 0
    manifest = json.loads((tmp_path / "x" / "manifest.json").read_text())
    assert manifest["seed"] == 9
    assert manifest["config"]["duration"] == 0.5
    lines = (tmp_path / "x" / "trace.csv").read_text().splitlines()
    assert len(lines) == 1 + 500


def test_seed_sweep(tmp_path):
    cfg = dict(MESO_CFG, out=str(tmp_path / "sweep"))
    rc = main(["meso", "--config", str(_write_cfg(tmp_path, cfg)),
               "--sweep", "3", "--no-plot"])
    assert rc == 0
    for s in (5, 6, 7):
        assert (tmp_path / "sweep" / f"trace_seed{s}.csv").exists()


def test_micro_and_psd_pipeline(tmp_path):
    micro_cfg = {
        "simulator": "micro",
        "params": MESO_CFG["params"],
        "duration": 4.0, "dt": 1e-3, "seed": 2,
        "out": str(tmp_path / "mic"),
    }
    assert main(["micro", "--config", str(_write_cfg(tmp_path, micro_cfg)),
                 "--no-plot"]) == 0
    raster = (tmp_path / "mic" / "raster.csv").read_text().splitlines()
    assert raster[0] == "t,neuron"
    assert main(["psd", "--input", str(tmp_path / "mic" / "trace.csv"),
                 "--segment", "1.0", "--out", str(tmp_path / "psd"),
                 "--no-plot"]) == 0
    psd = (tmp_path / "psd" / "psd.csv").read_text().splitlines()
    assert psd[0] == "f,power"


def test_couple_outputs(tmp_path):
    cfg = {
        "simulator": "couple",
        "params": {"N": 10, "tau_m": 0.02, "mu": 20.0, "J": 0.0,
                   "f": {"kind": "sigmoid", "f_min": 1.0, "f_max": 20.0,
                         "theta": 10.0, "slope": 1.0}},
        "nu0": [[0.0, 1.0]], "nu0_tilde": [[5.0, 0.5]],
        "Lambda": 15.0, "duration": 5.0, "seed": 3,
        "out": str(tmp_path / "cp"),
    }
    assert main(["couple", "--config", str(_write_cfg(tmp_path, cfg)),
                 "--no-plot"]) == 0
    jumps = (tmp_path / "cp" / "jumps.csv").read_text().splitlines()
    assert jumps[0] == "t,side"
    sides = {line.split(",")[1] for line in jumps[1:]}
    assert sides <= {"both", "left", "right"}


def test_fig1_recipe_reduced_scale(tmp_path):
    cfg = {"simulator": "fig1", "seed": 1, "out": str(tmp_path / "f1"),
           "psd_duration": 4.0, "long_duration": 2.0, "short_duration": 0.5}
    assert main(["fig1", "--config", str(_write_cfg(tmp_path, cfg))]) == 0
    out = tmp_path / "f1"
    for name in ("fig1a_micro.csv", "fig1a_macro.csv", "fig1a_raster.csv",
                 "fig1b_meso_psd.csv", "fig1b_theory_psd.csv",
                 "fig1cdef_full.csv", "fig1cdef_naive.csv",
                 "fig1cdef_fixed.csv", "fig1cdef_macro.csv",
                 "fig1b.png", "fig1cd.png", "fig1ef_mass.png"):
        assert (out / name).exists(), name


def test_selftest_exit_code():
    assert main(["selftest", "--quiet"]) == 0


def test_csv_number_format(tmp_path):
    cfg = dict(MESO_CFG, out=str(tmp_path / "fmt"))
    assert main(["meso", "--config", str(_write_cfg(tmp_path, cfg)),
                 "--no-plot"]) == 0
    line = (tmp_path / "fmt" / "trace.csv").read_text().splitlines()[1]
    assert line.split(",")[0] == "0"
    assert line.split(",")[1] == "1000"
