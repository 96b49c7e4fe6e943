# ************************************
# |docname| - Tests of the run config
# ************************************
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
import logging
from pathlib import Path

# Third-party imports
# -------------------
from pydantic import ValidationError
import pytest

# Local application imports
# -------------------------
from jointfield.applogger import jflogger
from jointfield.config import (
    EnergyConfig,
    RunConfig,
    RunMode,
    Settings,
    apply_overrides,
    emit_config,
    load_config,
    parse_config,
    save_config,
    settings,
)
from jointfield.exceptions import ConfigError


CONFIGS = Path(__file__).parents[1] / "configs"


def test_settings_from_environment():
    # Set by ``pytest-env`` in ``pyproject.toml``.
    assert settings.run_mode == RunMode.test
    assert settings.workers == 1


def test_log_level_follows_the_run_mode():
    assert Settings(run_mode=RunMode.development, log_level=None).effective_log_level == "INFO"
    assert Settings(run_mode=RunMode.production, log_level=None).effective_log_level == "WARNING"
    assert Settings(run_mode=RunMode.production, log_level="debug").effective_log_level == "DEBUG"
    # The suite runs in test mode with no explicit level.
    assert settings.effective_log_level == "WARNING"
    assert jflogger.level == logging.WARNING


def test_defaults():
    config = RunConfig()
    assert (config.lambda_d, config.lambda_a, config.lambda_s) == (1.0, 0.1, 0.1)
    assert config.epsilon == 0.001
    assert config.tile_stride == 19
    assert config.energy == EnergyConfig()


def test_round_trip(tmp_path):
    config = RunConfig(lambda_a=0.123456789012345, seed=99, augment=False, dataset_path="some where")
    assert parse_config(emit_config(config)) == config
    save_config(config, tmp_path / "run.cfg")
    assert load_config(tmp_path / "run.cfg") == config


def test_parse_comments_and_types():
    config = parse_config(
        """
        # A comment line.
        levels = 2   # trailing comment
        joint_learning = false
        lr = 1e-3
        """
    )
    assert config.levels == 2
    assert config.joint_learning is False
    assert config.lr == 0.001


@pytest.mark.parametrize(
    "text, match",
    [
        ("no_such_key = 1", "unknown key"),
        ("levels 3", "expected"),
        ("levels = zero", "levels"),
        ("height = 40", "multiples of 16"),
        ("init_scheme = xavier", "init_scheme"),
        ("lambda_d = -1", "lambda_d"),
        ("tile_stride = 20", "tile_stride"),
    ],
)
def test_parse_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_line_numbers_in_errors():
    with pytest.raises(ConfigError, match="<config>:2"):
        parse_config("levels = 2\nbogus = 1\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")


def test_overrides():
    config = apply_overrides(RunConfig(), ["lambda_d=0", "levels = 1", "gradient_scale=false"])
    assert config.lambda_d == 0 and config.levels == 1 and not config.gradient_scale
    with pytest.raises(ConfigError):
        apply_overrides(config, ["rounds=0"])


def test_extra_fields_are_rejected():
    with pytest.raises(ValidationError):
        RunConfig(rounds=1, colour="red")
    with pytest.raises(ValidationError):
        EnergyConfig(lambda_d=1.0, height=64)


def test_max_iters():
    assert EnergyConfig().max_iters_for(100) == 1000
    assert EnergyConfig(solver_max_iters=7).max_iters_for(100) == 7


@pytest.mark.parametrize("name", ["smoke.cfg", "generalize.cfg"])
def test_shipped_configs_parse(name):
    config = load_config(CONFIGS / name)
    assert config.height % 16 == 0
    assert config.global_lr < config.lr
