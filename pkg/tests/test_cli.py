import json
import subprocess
import sys

import pytest

from degenhorizon.cli import EXIT_CODES, main
from degenhorizon.config import PipelineConfig
from degenhorizon import errors

SMALL = "[grid]\nband = 16\ncollar_band = 16\nn_times = 17\n\n[collar]\neps_values = 0.01\nA_values = 10.0, 30.0\n"


@pytest.fixture(scope="module")
def cfg_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "small.cfg"
    p.write_text(SMALL)
    return str(p)


@pytest.fixture(scope="module")
def collar_dir(tmp_path_factory, cfg_file):
    out = tmp_path_factory.mktemp("pipeline")
    for cmd in ("find-degenerate", "path", "collar"):
        assert main(["--config", cfg_file, "--out", str(out), cmd]) == 0, cmd
    return out


def _json(path):
    return json.loads(path.read_text())


def test_config_command_roundtrips(capsys, cfg_file):
    assert main(["--config", cfg_file, "config"]) == 0
    text = capsys.readouterr().out
    cfg = PipelineConfig.from_string(text)
    assert cfg.band == 16 and cfg.A_values == (10.0, 30.0)
    assert cfg == PipelineConfig.load(cfg_file)


def test_bad_config_is_usage_error(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[grid]\nband = 1\n")
    assert main(["--config", str(p), "--out", str(tmp_path), "config"]) == 2


def test_missing_config_file_is_usage_error(tmp_path):
    assert main(["--config", str(tmp_path / "none.cfg"), "config"]) == 2


def test_unknown_command_is_usage_error():
    assert main(["frobnicate"]) == 2


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0


@pytest.mark.parametrize("cmd", [["path"], ["collar"], ["glue"], ["verify"], ["oracle", "degenerate"]])
def test_missing_inputs(tmp_path, cmd):
    assert main(["--out", str(tmp_path)] + cmd) == 3


def test_exit_code_table_is_consistent():
    codes = dict((cls, code) for cls, code in EXIT_CODES)
    assert codes[errors.BridgeInfeasible] == 12
    assert codes[errors.DegenHorizonError] == 29
    assert all(issubclass(c, errors.DegenHorizonError) for c in codes)
    assert set(codes.values()).isdisjoint({0, 1, 2, 3})


def test_schwarzschild_glue_then_verify(tmp_path):
    assert main(["--out", str(tmp_path), "glue", "--schwarzschild-only", "--m", "1.0"]) == 0
    man = _json(tmp_path / "manifest.json")
    assert man["m"] == 1.0 and man["epsilon"] is None
    assert abs(man["adm_numeric"]["extrapolated"] - 1.0) < 1e-3
    assert main(["--out", str(tmp_path), "verify"]) == 0
    rep = _json(tmp_path / "verify.json")
    assert rep["passed"] and rep["theorem"]["iv"]["residual"] <= 1e-9


def test_schwarzschild_only_needs_mass(tmp_path):
    assert main(["--out", str(tmp_path), "glue", "--schwarzschild-only"]) == 3


def test_output_dir_from_environment(tmp_path, monkeypatch):
    target = tmp_path / "from-env"
    monkeypatch.setenv("DEGENHORIZON_OUTPUT_DIR", str(target))
    assert main(["glue", "--schwarzschild-only", "--m", "0.5"]) == 0
    assert (target / "manifest.json").exists()
    other = tmp_path / "from-flag"
    assert main(["--out", str(other), "glue", "--schwarzschild-only", "--m", "0.5"]) == 0
    assert (other / "manifest.json").exists()


def test_constant_w_exit_code(tmp_path, cfg_file):
    assert main(["--config", cfg_file, "--out", str(tmp_path), "find-degenerate", "--w-spec", "Y:0,0:1.0"]) == 18
    err = _json(tmp_path / "error.json")
    assert err["error"] == "NoPositivePoint" and err["exit_code"] == 18


def test_unparsable_w_spec_is_usage_error(tmp_path, cfg_file):
    assert main(["--config", cfg_file, "--out", str(tmp_path), "find-degenerate", "--w-spec", "Y:x"]) == 2


def test_find_degenerate_is_deterministic(tmp_path, cfg_file):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        assert main(["--config", cfg_file, "--out", str(d), "--plot-data", "find-degenerate"]) == 0
        outs.append(d)
    for name in ("degenerate.json", "w0.bin", "w0.csv", "plot/eigen_curve.dat"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_pipeline_reports(collar_dir):
    deg = _json(collar_dir / "degenerate.json")
    assert deg["passed"] and abs(deg["result"]["lambda1"]) <= 1e-7
    path = _json(collar_dir / "path.json")
    assert path["passed"]
    col = _json(collar_dir / "collar.json")
    assert col["passed"] and col["chosen"]["epsilon"] == 0.01


def test_glue_at_hawking_mass_is_infeasible(collar_dir):
    hm = _json(collar_dir / "degenerate.json")["hawking_mass"]
    assert main(["--config", "/dev/null", "--out", str(collar_dir), "glue", "--m", repr(hm)]) == 12
    assert _json(collar_dir / "error.json")["error"] == "BridgeInfeasible"


def test_glue_and_verify_degenerate(collar_dir, cfg_file):
    assert main(["--config", cfg_file, "--out", str(collar_dir), "glue"]) == 0
    man = _json(collar_dir / "manifest.json")
    assert abs(man["m"] - 1.02 * man["hawking_mass"]) < 1e-12
    assert main(["--config", cfg_file, "--out", str(collar_dir), "verify"]) == 0
    rep = _json(collar_dir / "verify.json")
    assert rep["passed"]
    assert abs(rep["theorem"]["i"]["boundary_R"]) <= 1e-5


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "degenhorizon.cli", "--out", str(tmp_path), "glue",
                          "--schwarzschild-only", "--m", "2.0"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
