"""INI run configuration parsing."""
import pytest

from cmnet.configfile import EvalSettings, load_config, parse_config
from cmnet.model import ConfigError, ModelConfig

GOOD = """
[model]
preset = toy
case = 3
fc_dim = 16

[train]
steps = 50
lr = 0.0005
chunk_seconds = 2

[scenario]
kind = DT
ser_db = -5
duration = 1.5
noise_kind = lowpass

[scenario.echo]
nonlinearity = arctan
delay_samples = 200

[eval]
n_per_kind = 3
"""


def test_parse_full_file():
    rc = parse_config(GOOD)
    assert rc.model == ModelConfig.toy(fc_dim=16).with_case(3)
    assert rc.train.steps == 50 and rc.train.lr == 0.0005
    spec = rc.scenario_spec(seed=4)
    assert spec.kind == "DT" and spec.ser_db == -5 and spec.seed == 4
    assert spec.echo.nonlinearity == "arctan" and spec.echo.delay_samples == 200
    assert rc.eval == EvalSettings(n_per_kind=3)


def test_empty_file_gives_defaults():
    rc = parse_config("")
    assert rc.model == ModelConfig() and rc.scenario_spec() is None


@pytest.mark.parametrize("text", [
    "[modle]\nx = 1\n",
    "[model]\nwidth = 3\n",
    "[model]\npreset = huge\n",
    "[train]\nsteps = 0\n",
    "[scenario]\nkind = ST_NE\nser_db = 0\n",
    "[scenario.echo]\nnonlinearity = cubic\n",
    "not an ini file",
])
def test_rejects_bad_config(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_config(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text(GOOD)
    assert load_config(p).train.steps == 50
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")
