# ******************************************
# |docname| - The ``jointfield`` command line
# ******************************************
# From the terminal / command line, execute either ``jointfield`` or ``python -m jointfield``, followed by a subcommand:
#
# ``synth``
#   Write a synthetic dataset of ``num_scenes`` scenes plus a checksum manifest.
# ``train``
#   Train all networks on a dataset and write a checkpoint after every round.
# ``infer``
#   Predict depth, albedo and shading for an image, or for every scene of a dataset.
# ``eval``
#   Score a directory of predictions against a directory of ground truth.
#
# Every subcommand takes ``--config``, ``--seed``, ``--out`` and any number of ``--set key=value`` overrides. Exit codes: 0 on success, 2 for bad configs, files or inputs, 3 for numerical failures.
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
from functools import wraps
import logging
from pathlib import Path
import sys
from typing import Callable, List, Optional, Tuple

# Third-party imports
# -------------------
import click
import numpy as np
from pydantic import ValidationError

# Local application imports
# -------------------------
from .applogger import jflogger
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, apply_overrides, load_config, save_config
from .exceptions import JointFieldError, NumericError
from .imaging import Domain, MultiChannelImage, to_linear, to_log
from .internal.fileformats import read_png, read_raster, write_preview, write_raster
from .metrics import evaluate_dirs, format_table, write_report_csv
from .pipeline import InferenceResult, TrainState, infer, train
from .synth import load_dataset, synthesize_dataset


# Exit codes
# ==========
EXIT_INPUT = 2
EXIT_NUMERIC = 3


# Map failures to exit codes; the message goes to stderr and the log.
def _exit_codes(f: Callable) -> Callable:
    @wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except NumericError as e:
            jflogger.error(str(e))
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_NUMERIC)
        except (JointFieldError, ValidationError, OSError) as e:
            jflogger.error(str(e))
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_INPUT)

    return wrapper


def _build_config(config_path: Optional[str], seed: Optional[int], overrides: Tuple[str, ...], base: Optional[RunConfig] = None) -> RunConfig:
    config = load_config(config_path) if config_path else (base or RunConfig())
    config = apply_overrides(config, overrides)
    if seed is not None:
        config = config.copy(update={"seed": seed})
    return config


def _common(f: Callable) -> Callable:
    f = click.option("--verbose", is_flag=True, help="Log every training step and solver call.")(f)
    f = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override a config key; repeatable.")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(f)
    f = click.option("--seed", type=int, default=None, help="Override the config's seed.")(f)
    f = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="A key = value config file.")(f)
    return f


def _verbosity(verbose: bool) -> None:
    if verbose:
        jflogger.setLevel(logging.DEBUG)


# Commands
# ========
@click.group()
def cli():
    """Joint depth, albedo and shading prediction from a single image."""


@cli.command()
@_common
@_exit_codes
def synth(config_path: Optional[str], seed: Optional[int], out: Optional[str], overrides: Tuple[str, ...], verbose: bool):
    """Write a synthetic dataset."""
    _verbosity(verbose)
    config = _build_config(config_path, seed, overrides)
    root = Path(out or config.dataset_path)
    synthesize_dataset(root, config.num_scenes, config.seed, config.height, config.width)
    click.echo(f"Wrote {config.num_scenes} scenes to {root}.")


@cli.command("train")
@_common
@click.option("--resume", is_flag=True, help="Continue from the checkpoint in the output directory.")
@_exit_codes
def train_cmd(
    config_path: Optional[str], seed: Optional[int], out: Optional[str], overrides: Tuple[str, ...], verbose: bool, resume: bool
):
    """Train every network on a dataset."""
    _verbosity(verbose)
    state: Optional[TrainState] = None
    base = None
    if resume:
        if not out:
            raise click.UsageError("--resume needs --out to name the checkpoint directory.")
        state, base = load_checkpoint(out)
    config = _build_config(config_path, seed, overrides, base)
    checkpoint_dir = Path(out or config.checkpoint_path)
    dataset = load_dataset(config.dataset_path)
    state = train(dataset, config, state, lambda s: save_checkpoint(checkpoint_dir, s, config))
    save_checkpoint(checkpoint_dir, state, config)
    click.echo(f"Trained {state.round} rounds; checkpoint in {checkpoint_dir}.")


def _read_image(path: Path) -> MultiChannelImage:
    if path.suffix.lower() == ".raw":
        return MultiChannelImage(read_raster(path), Domain.log)
    return to_log(MultiChannelImage(read_png(path), Domain.linear))


# Inputs are either a single image file (``.png`` or a log-domain ``.raw``) or a dataset directory.
def _inputs(path: Path) -> List[Tuple[str, MultiChannelImage]]:
    if path.is_dir():
        return [(r.id, r.I) for r in load_dataset(path)]
    if not path.exists():
        raise FileNotFoundError(f"No image at {path}.")
    return [(path.stem, _read_image(path))]


# Albedo and shading are log-domain images, offset like the input.
def _linear(values: np.ndarray) -> np.ndarray:
    return to_linear(MultiChannelImage(values, Domain.log)).values


def _write_result(directory: Path, result: InferenceResult) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    write_raster(directory / "D.raw", result.depth)
    write_raster(directory / "A.raw", result.albedo)
    write_raster(directory / "S.raw", result.shading)
    write_preview(directory / "D.png", result.depth_linear, "jointfield depth preview (linear depth)")
    write_preview(directory / "A.png", _linear(result.albedo), "jointfield albedo preview (linear albedo)")
    write_preview(directory / "S.png", _linear(result.shading), "jointfield shading preview (linear shading)")


@cli.command("infer")
@_common
@click.option("--checkpoint", type=click.Path(file_okay=False), default=None, help="Checkpoint directory.")
@click.option("--baseline", is_flag=True, help="Return the global depth net's prediction without gradient-domain refinement.")
@click.argument("image", type=click.Path())
@_exit_codes
def infer_cmd(
    config_path: Optional[str],
    seed: Optional[int],
    out: Optional[str],
    overrides: Tuple[str, ...],
    verbose: bool,
    checkpoint: Optional[str],
    baseline: bool,
    image: str,
):
    """Predict depth, albedo and shading for IMAGE (a PNG, a .raw raster or a dataset directory).

    The networks and every config key come from the checkpoint; a --config file only supplies checkpoint_path. Use --set to change inference keys.
    """
    _verbosity(verbose)
    if config_path:
        click.echo(f"Warning: only checkpoint_path is read from {config_path}; the other keys come from the checkpoint.", err=True)
    pre = _build_config(config_path, seed, overrides)
    state, stored = load_checkpoint(checkpoint or pre.checkpoint_path)
    # The checkpoint's config fixes the networks; inference knobs may be overridden.
    config = _build_config(None, seed, overrides, stored)
    out_dir = Path(out or "results")
    for id_, img in _inputs(Path(image)):
        result = infer(img, state, config, baseline)
        _write_result(out_dir / id_, result)
        click.echo(f"{id_}:")
        for t in result.trace:
            energies = " ".join(f"{e:.9g}" for e in t.energies)
            rejected = f" (rejected iteration {t.rejected})" if t.rejected else ""
            click.echo(f"  level {t.level} {t.hw[0]}x{t.hw[1]}: {energies}{rejected}")
    save_config(config, out_dir / "config.cfg")


@cli.command("eval")
@_common
@click.option("--max-depth", type=float, default=None, help="Score only pixels closer than this depth.")
@click.argument("pred_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("gt_dir", type=click.Path(exists=True, file_okay=False))
@_exit_codes
def eval_cmd(
    config_path: Optional[str],
    seed: Optional[int],
    out: Optional[str],
    overrides: Tuple[str, ...],
    verbose: bool,
    max_depth: Optional[float],
    pred_dir: str,
    gt_dir: str,
):
    """Score the predictions in PRED_DIR against the ground truth in GT_DIR."""
    _verbosity(verbose)
    rows = evaluate_dirs(pred_dir, gt_dir, max_depth)
    click.echo(format_table(rows))
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        write_report_csv(Path(out) / "metrics.csv", rows)


if __name__ == "__main__":
    sys.exit(cli())
