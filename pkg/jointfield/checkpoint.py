# ****************************
# |docname| - Checkpoint files
# ****************************
# A checkpoint is one directory:
#
# ``manifest.txt``
#   The network topology, one line per layer: set, layer, kind, kernel size, input and output channels, stride, padding and share group. Loading refuses a checkpoint whose topology differs from the one its config describes.
# ``<set>.jcnp``
#   The seven parameter sets. The albedo and shading gradient sets both store the shared stem layers; on load the two copies must be bit-identical.
# ``config.cfg``
#   The run configuration.
# ``losses.csv``
#   The loss curve: ``round,phase,loss``.
# ``state.txt``
#   Training progress: completed rounds, seed, and which scale nets are still in unit bypass.
#
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
import csv
from pathlib import Path
from typing import Dict, Tuple, Union

# Third-party imports
# -------------------
# None.

# Local application imports
# -------------------------
from .applogger import jflogger
from .config import RunConfig, load_config, save_config
from .energy import ROLES
from .exceptions import FormatError, ShapeError
from .internal.fileformats import read_params, write_params
from .networks import SET_NAMES, GlobalDepthNet, GradientNets, ScaleNet, topology_lines
from .pipeline import LossRow, TrainState


# Globals
# =======
MANIFEST = "manifest.txt"
CONFIG = "config.cfg"
LOSSES = "losses.csv"
STATE = "state.txt"
_MANIFEST_HEADER = "# jointfield checkpoint topology: set layer kind kernel in out stride padding share_group"


# Saving
# ======
def _state_lines(state: TrainState) -> str:
    values = {
        "round": str(state.round),
        "seed": str(state.seed),
        "global_trained": str(state.global_trained).lower(),
        "converged": str(state.converged).lower(),
    }
    for role in ROLES:
        values[f"{role}_scale_bypass"] = str(state.scale_nets[role].bypass).lower()
    return "".join(f"{k} = {v}\n" for k, v in values.items())


def save_checkpoint(directory: Union[str, Path], state: TrainState, config: RunConfig) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = topology_lines(config.height, config.width, config.width_divisor)
    (directory / MANIFEST).write_text("\n".join([_MANIFEST_HEADER] + lines) + "\n", encoding="utf-8")

    sets = {"global_depth": state.global_net.params, **state.grad_nets.param_sets()}
    sets.update({f"{role}_scale": state.scale_nets[role].params for role in ROLES})
    for name in SET_NAMES:
        write_params(directory / f"{name}.jcnp", sets[name])

    save_config(config, directory / CONFIG)
    with open(directory / LOSSES, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["round", "phase", "loss"])
        for row in state.losses:
            writer.writerow([row.round, row.phase, repr(row.loss)])
    (directory / STATE).write_text(_state_lines(state), encoding="utf-8")
    jflogger.info(f"Saved a checkpoint after round {state.round} to {directory}.")
    return directory


# Loading
# =======
def _read_state(path: Path) -> Dict[str, str]:
    values = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"{path}:{lineno}: expected 'key = value'.")
        values[key.strip()] = value.strip()
    return values


def _flag(values: Dict[str, str], key: str, path: Path) -> bool:
    try:
        return {"true": True, "false": False}[values[key]]
    except KeyError:
        raise FormatError(f"{path}: '{key}' is missing or not true/false.") from None


def load_checkpoint(directory: Union[str, Path]) -> Tuple[TrainState, RunConfig]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"No checkpoint at {directory}.")
    for name in (MANIFEST, CONFIG, LOSSES, STATE) + tuple(f"{s}.jcnp" for s in SET_NAMES):
        if not (directory / name).exists():
            raise FormatError(f"Checkpoint {directory} is missing {name}.")

    config = load_config(directory / CONFIG)
    listed = [
        line for line in (directory / MANIFEST).read_text(encoding="utf-8").splitlines() if line and not line.startswith("#")
    ]
    if listed != topology_lines(config.height, config.width, config.width_divisor):
        raise FormatError(f"{directory / MANIFEST}: the stored topology doesn't match the checkpoint's config.")

    sets = {name: read_params(directory / f"{name}.jcnp") for name in SET_NAMES}
    state_path = directory / STATE
    values = _read_state(state_path)
    try:
        global_net = GlobalDepthNet(config.height, config.width, sets["global_depth"], config.width_divisor)
        grad_nets = GradientNets.from_param_sets(sets, config.width_divisor)
        scale_nets = {
            role: ScaleNet(role, sets[f"{role}_scale"], _flag(values, f"{role}_scale_bypass", state_path), config.width_divisor)
            for role in ROLES
        }
    except ShapeError as e:
        raise FormatError(f"Checkpoint {directory}: {e}") from e

    with open(directory / LOSSES, newline="", encoding="utf-8") as f:
        try:
            losses = [LossRow(int(r["round"]), r["phase"], float(r["loss"])) for r in csv.DictReader(f)]
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"{directory / LOSSES}: {e}") from e
    try:
        round_, seed = int(values["round"]), int(values["seed"])
    except (KeyError, ValueError) as e:
        raise FormatError(f"{state_path}: bad or missing round/seed: {e}") from e

    state = TrainState(
        global_net,
        grad_nets,
        scale_nets,
        seed,
        round_,
        _flag(values, "global_trained", state_path),
        _flag(values, "converged", state_path),
        losses,
    )
    jflogger.info(f"Loaded a checkpoint from {directory} at round {round_}.")
    return state, config
