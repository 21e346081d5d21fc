import json
import math

from coalitioncore import config as config_module
from coalitioncore.config import SolverConfig, load_config
from coalitioncore.utils import safe_ratio


def test_bundled_config_matches_defaults():
    """
    The bundled config file sets the same values as the dataclass defaults
    """
    loaded = load_config(config_module.DEFAULT_CONFIG_FILE)
    assert loaded == SolverConfig()
    assert loaded.max_exhaustive_agents == 16


def test_config_file_and_tolerance_override(tmp_path, monkeypatch):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"tolerance": 1e-7, "epsilon": 0.5}), encoding="utf-8")
    monkeypatch.setenv(config_module.CONFIG_PATH_VARIABLE, str(path))
    loaded = load_config()
    assert loaded.epsilon == 0.5
    assert loaded.tolerance == 1e-7
    assert loaded.lp_tolerance == 1e-6, "Missing entries must keep their default"

    monkeypatch.setenv(config_module.TOLERANCE_VARIABLE, "1e-5")
    assert load_config().tolerance == 1e-5


def test_safe_ratio_conventions():
    assert safe_ratio(0.0, 0.0, 1e-9) == 1.0
    assert math.isinf(safe_ratio(2.0, 0.0, 1e-9))
    assert safe_ratio(3.0, 2.0, 1e-9) == 1.5
