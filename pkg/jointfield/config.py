# ***********************************
# |docname| - Configuring jointfield
# ***********************************
# There are two layers of configuration:
#
# -   `Settings` holds process-level knobs (log level, thread count, run mode). Defaults provided here may be overridden by environment variables with the ``JOINTFIELD_`` prefix, `per <https://pydantic-docs.helpmanual.io/usage/settings/>`_ the pydantic settings docs.
# -   `RunConfig` holds everything an experiment needs: energy weights, pyramid depth, solver tolerances, network sizes, learning rates, paths. It is stored as a plain-text file of ``key = value`` lines so that a run can be reproduced from its checkpoint directory.
#
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

# Third-party imports
# -------------------
from pydantic import BaseModel, BaseSettings, Field, ValidationError, validator

# Local application imports
# -------------------------
from .applogger import jflogger
from .exceptions import ConfigError


# Settings
# ========
# The values assigned must be strings, since pydantic matches these with environment variables.
class RunMode(Enum):
    development = "development"
    test = "test"
    production = "production"


class Settings(BaseSettings):
    # See the `admonition in the reference settings <https://pydantic-docs.helpmanual.io/usage/types/#enums-and-choices>`_: compare against the Enum, not against a string.
    run_mode: RunMode = RunMode.development

    # Unset, the level follows the run mode.
    log_level: Optional[str] = None

    # Threads used for the independent per-channel intrinsic solves and per-record scene synthesis. Results never depend on this value.
    workers: int = Field(4, ge=1)

    class Config:
        env_prefix = "JOINTFIELD_"

    @property
    def effective_log_level(self) -> str:
        if self.log_level:
            return self.log_level.upper()
        # Production runs and the test suite only report problems.
        return "INFO" if self.run_mode == RunMode.development else "WARNING"


settings = Settings()
jflogger.setLevel(settings.effective_log_level)


# Energy configuration
# ====================
# The weights and solver knobs of the joint energy; this is the subset of `RunConfig` that inference needs.
class EnergyConfig(BaseModel):
    # Weights of the depth, albedo and shading pairwise terms.
    lambda_d: float = Field(1.0, ge=0)
    lambda_a: float = Field(0.1, ge=0)
    lambda_s: float = Field(0.1, ge=0)
    # Added to the luminance that weights the image formation term.
    epsilon: float = Field(0.001, gt=0)
    # Number of pyramid levels, N_L.
    levels: int = Field(3, ge=1)
    inner_iters: int = Field(3, ge=1)
    # Stop the inner loop early when the level energy improves by less than this fraction.
    inner_tol: float = Field(1e-6, ge=0)
    solver_tol: float = Field(1e-8, gt=0)
    # Zero selects ``10 * H * W``.
    solver_max_iters: int = Field(0, ge=0)

    class Config:
        extra = "forbid"

    def max_iters_for(self, num_unknowns: int) -> int:
        return self.solver_max_iters or 10 * num_unknowns


# Run configuration
# =================
# Field order matters: `emit_config` writes the fields in this order.
class RunConfig(BaseModel):
    # Energy
    # ------
    # These mirror `EnergyConfig`; they're kept flat so the config file has no sections.
    lambda_d: float = Field(1.0, ge=0)
    lambda_a: float = Field(0.1, ge=0)
    lambda_s: float = Field(0.1, ge=0)
    epsilon: float = Field(0.001, gt=0)
    levels: int = Field(3, ge=1)
    inner_iters: int = Field(3, ge=1)
    inner_tol: float = Field(1e-6, ge=0)
    solver_tol: float = Field(1e-8, gt=0)
    solver_max_iters: int = Field(0, ge=0)

    # Data
    # ----
    dataset_path: str = "dataset"
    checkpoint_path: str = "checkpoint"
    # Scene size. This is also the native input size of the global depth net.
    height: int = 64
    width: int = 64
    # The number of training scenes, N_C.
    num_scenes: int = Field(20, ge=1)
    augment: bool = True

    # Networks
    # --------
    # Divides the channel widths of every network; 1 gives the full-size layers.
    width_divisor: int = Field(4, ge=1)
    init_scheme: str = "gaussian"
    init_std: float = Field(0.001, gt=0)
    # Stride between tiles when a gradient or scale net is applied to a whole image. Must not exceed the 19 pixel output patch.
    tile_stride: int = Field(19, ge=1, le=19)
    # The confidence a scale net starts at when it leaves unit bypass.
    scale_release_confidence: float = Field(0.95, gt=0, lt=1)

    # Training
    # --------
    # Epochs over the scenes for the global depth net.
    epochs: int = Field(200, ge=1)
    global_batch_size: int = Field(4, ge=1)
    # SGD steps per alternation phase.
    phase_steps: int = Field(200, ge=1)
    batch_size: int = Field(32, ge=1)
    # The cap on alternation rounds, and the relative improvement that ends them sooner.
    rounds: int = Field(5, ge=1)
    round_tol: float = Field(1e-3, ge=0)
    lr: float = Field(1e-4, gt=0)
    # Learning rate of the final layer of the gradient nets.
    lr_final: float = Field(1e-5, gt=0)
    # Learning rate of the global depth net.
    global_lr: float = Field(1e-4, gt=0)
    # A loss above this (or a non-finite loss) aborts training.
    divergence_limit: float = Field(1e6, gt=0)

    # Ablations
    # ---------
    # Share conv2 activations between the depth and intrinsic nets.
    joint_learning: bool = True
    # Use the gradient scale nets; when false, every confidence is 1.
    gradient_scale: bool = True
    # Solve on an image pyramid; when false, a single full-resolution level.
    coarse_to_fine: bool = True

    seed: int = 0

    class Config:
        extra = "forbid"

    @validator("height", "width")
    def multiple_of_16(cls, v):
        if v < 32 or v % 16:
            raise ValueError(f"scene dimensions must be multiples of 16 and at least 32, not {v}")
        return v

    @validator("init_scheme")
    def known_scheme(cls, v):
        if v not in ("gaussian", "he"):
            raise ValueError(f"init_scheme must be 'gaussian' or 'he', not '{v}'")
        return v

    @property
    def energy(self) -> EnergyConfig:
        return EnergyConfig(
            **{name: getattr(self, name) for name in EnergyConfig.__fields__}
        )


# Reading and writing
# ===================
# Split ``key = value`` lines into a dict of strings. ``#`` starts a comment anywhere on a line.
def _parse_lines(lines: Iterable[str], source: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, raw_line in enumerate(lines, 1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got '{raw_line.strip()}'.")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in RunConfig.__fields__:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'.")
        values[key] = value
    return values


def _build(values: Dict[str, Any], source: str) -> RunConfig:
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"{source}: {e}") from e


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    return _build(_parse_lines(text.splitlines(), source), source)


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Unable to read config file {path}: {e}") from e
    return parse_config(text, str(path))


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        # ``repr`` gives the shortest string that reads back to the same float.
        return repr(value)
    return str(value)


def emit_config(config: RunConfig) -> str:
    lines = ["# jointfield run configuration"]
    for name in RunConfig.__fields__:
        lines.append(f"{name} = {_format_value(getattr(config, name))}")
    return "\n".join(lines) + "\n"


def save_config(config: RunConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(emit_config(config), encoding="utf-8")


# Apply ``key=value`` overrides from the command line (``--set``) on top of an existing config.
def apply_overrides(config: RunConfig, overrides: Iterable[str]) -> RunConfig:
    values: Dict[str, Any] = config.dict()
    values.update(_parse_lines(overrides, "--set"))
    return _build(values, "--set")
