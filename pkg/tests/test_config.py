import pytest

from degenhorizon.config import PipelineConfig


def test_default_roundtrip_is_exact():
    cfg = PipelineConfig()
    assert PipelineConfig.from_string(cfg.to_string()) == cfg


def test_roundtrip_preserves_awkward_floats(tmp_path):
    cfg = PipelineConfig(tilt=0.1 + 0.2, eps_values=(1e-2, 3.3e-3, 1 / 3), A_values=(7.5,), seed=3)
    path = tmp_path / "c.cfg"
    cfg.save(path)
    back = PipelineConfig.load(path)
    assert back == cfg
    assert back.eps_values[2] == 1 / 3


def test_partial_file_keeps_defaults():
    cfg = PipelineConfig.from_string("[grid]\nband = 20\n")
    assert cfg.band == 20 and cfg.collar_band == PipelineConfig().collar_band


@pytest.mark.parametrize("text", [
    "[grid]\nbogus = 1\n",
    "[nowhere]\nband = 1\n",
    "[tolerances]\ntol_R = 0\n",
    "[tolerances]\ntol_H = -1e-4\n",
    "[collar]\nt_min = 0.5\n",
    "[collar]\neps_values = -1e-3\n",
    "[collar]\nA_values =\n",
    "[grid]\nband = 2\n",
    "[glue]\neps_shrink = 1.5\n",
    "[grid]\nband = twelve\n",
])
def test_invalid_configs_are_rejected(text):
    with pytest.raises(ValueError):
        PipelineConfig.from_string(text)


def test_replace_revalidates():
    with pytest.raises(ValueError):
        PipelineConfig().replace(mass_factor=-1.0)
