# ******************************************
# |docname| - Training and joint inference
# ******************************************
# Training
# ========
# `train` fits the seven parameter sets in this order:
#
# #.  The global depth net, for ``epochs`` passes over the scenes.
# #.  The scale nets start in unit bypass (every confidence is exactly 1).
# #.  Alternation rounds. Phase A trains the gradient nets with the scale nets fixed; phase B trains the scale nets with the gradient nets fixed. The first phase B releases the scale nets from bypass. After each round, the pairwise loss on a fixed set of evaluation patches decides whether to continue.
#
# Randomness is drawn from generators seeded by ``(seed, round, stream)``, so a run resumed from a checkpoint draws the same patches it would have drawn without the interruption.
#
# Inference
# =========
# `infer` runs on an image pyramid, coarsest level first. At each level the networks run once; an inner loop then alternates between computing confidences from the current estimates and solving for depth, albedo and shading. Each level's solution, upsampled, anchors the next level.
#
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

# Third-party imports
# -------------------
import numpy as np

# Local application imports
# -------------------------
from .applogger import jflogger
from .config import RunConfig
from .energy import (
    GRAD_NET,
    ROLES,
    SCALE_NET,
    LevelTargets,
    evaluate_pairwise,
    joint_energy,
    loss_global_depth,
    loss_pairwise,
)
from .exceptions import DivergenceError, ShapeError, SolverError
from .imaging import (
    Domain,
    GradientField,
    MultiChannelImage,
    bilinear_resize,
    build_pyramid,
    forward_gradient,
    luminance_weight,
    squared_magnitude_channels,
    to_linear,
)
from .internal.layers import Tensor
from .networks import (
    GlobalDepthNet,
    GradientNets,
    ScaleNet,
    apply_grads,
    gradient_net_forward,
    predict_coarse_depth,
    scale_net_forward,
)
from .solver import solve_depth, solve_intrinsic
from .synth import PatchBatch, SceneRecord, augment, guidance_stacks, sample_patches


# Training state
# ==============
@dataclass(frozen=True)
class LossRow:
    round: int
    # ``global`` (one row per epoch, numbered from 1), ``initial`` (round 0), ``A`` or ``B``.
    phase: str
    loss: float


@dataclass
class TrainState:
    global_net: GlobalDepthNet
    grad_nets: GradientNets
    scale_nets: Dict[str, ScaleNet]
    seed: int
    # Completed alternation rounds.
    round: int = 0
    global_trained: bool = False
    # True once the round loss stopped improving, so a resumed run has nothing left to do.
    converged: bool = False
    losses: List[LossRow] = field(default_factory=list)

    @classmethod
    def create(cls, config: RunConfig) -> "TrainState":
        rng = np.random.default_rng([config.seed, 0, 0])
        kw = dict(width_divisor=config.width_divisor, scheme=config.init_scheme, std=config.init_std)
        return cls(
            GlobalDepthNet.create(rng, config.height, config.width, **kw),  # type: ignore
            GradientNets.create(rng, **kw),  # type: ignore
            {role: ScaleNet.create(role, rng, **kw) for role in ROLES},  # type: ignore
            config.seed,
        )

    def last_loss(self, phases: Sequence[str] = ("initial", "A", "B")) -> Optional[float]:
        for row in reversed(self.losses):
            if row.phase in phases:
                return row.loss
        return None


# Stream ids for the seeded generators.
_EPOCHS, _AUGMENT, _PHASE_A, _PHASE_B, _EVAL = range(1, 6)


def _rng(config: RunConfig, round_: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, round_, stream])


def _check_loss(loss: float, phase: str, round_: int, config: RunConfig, epoch: Optional[int] = None) -> None:
    if not np.isfinite(loss) or loss > config.divergence_limit:
        where = f"epoch {epoch}" if epoch is not None else f"round {round_}"
        jflogger.error(f"Loss {loss!r} in phase {phase} at {where} exceeds the divergence limit.")
        raise DivergenceError(phase, round_, loss, epoch)


def _check_dataset(dataset: Sequence[SceneRecord], config: RunConfig) -> None:
    if not dataset:
        raise ValueError("Training needs at least one scene.")
    for record in dataset:
        record.check()
        if record.hw != (config.height, config.width):
            raise ShapeError(
                f"Scene {record.id} is {record.hw[0]}x{record.hw[1]}; the config expects {config.height}x{config.width}."
            )


# Step 1: the global depth net
# ----------------------------
def train_global(state: TrainState, dataset: Sequence[SceneRecord], config: RunConfig) -> None:
    net = state.global_net
    for epoch in range(1, config.epochs + 1):
        rng = _rng(config, epoch, _EPOCHS)
        order = rng.permutation(len(dataset))
        records = [dataset[k] for k in order]
        if config.augment:
            records = [augment(r, int(rng.integers(2**32))) for r in records]
        epoch_loss = 0.0
        for start in range(0, len(records), config.global_batch_size):
            chunk = records[start : start + config.global_batch_size]
            loss, grads = loss_global_depth(
                np.stack([r.I.values for r in chunk]), np.stack([r.D.values for r in chunk]), net
            )
            _check_loss(loss, "global", state.round, config, epoch)
            net = GlobalDepthNet(net.height, net.width, apply_grads(net.params, grads, config.global_lr), net.width_divisor)
            epoch_loss += loss * len(chunk)
        epoch_loss /= len(records)
        state.losses.append(LossRow(epoch, "global", epoch_loss))
        jflogger.debug(f"Global depth epoch {epoch}: loss {epoch_loss:.6g}.")
    state.global_net = net
    state.global_trained = True
    jflogger.info(f"Trained the global depth net for {config.epochs} epochs; final loss {state.losses[-1].loss:.6g}.")


# Alternation
# -----------
# Draw a batch of patches spread uniformly over the scenes. ``coarse`` holds each scene's upsampled global net prediction.
def draw_batch(
    records: Sequence[SceneRecord], coarse: Sequence[Tensor], count: int, rng: np.random.Generator
) -> PatchBatch:
    picks = rng.integers(0, len(records), size=count)
    samples = []
    for k in sorted(set(picks.tolist())):
        samples.extend(sample_patches(records[k], int((picks == k).sum()), rng, coarse[k]))
    return PatchBatch.stack(samples)


def _coarse_depths(records: Sequence[SceneRecord], net: GlobalDepthNet) -> List[Tensor]:
    return [predict_coarse_depth(r.I, net) for r in records]


def _round_loss(state: TrainState, batch: PatchBatch, config: RunConfig) -> float:
    return sum(evaluate_pairwise(batch, state.grad_nets, state.scale_nets, config.joint_learning).values())


def train_phase_a(state: TrainState, records, coarse, config: RunConfig, round_: int) -> None:
    rng = _rng(config, round_, _PHASE_A)
    # Peers are zero in the very first phase: neither branch has trained activations to offer yet.
    peers_live = config.joint_learning and round_ > 1
    if config.joint_learning and not peers_live:
        jflogger.warning("Round 1, phase A: using zero peer activations until the gradient nets are trained.")
    nets = state.grad_nets
    for step in range(1, config.phase_steps + 1):
        batch = draw_batch(records, coarse, config.batch_size, rng)
        result = loss_pairwise(batch, nets, state.scale_nets, {SCALE_NET}, peers_live)
        _check_loss(result.loss, "A", round_, config)
        nets = nets.step(result.grad_net_grads, config.lr, config.lr_final)
        jflogger.debug(f"Round {round_} phase A step {step}: loss {result.loss:.6g}.")
    state.grad_nets = nets


def train_phase_b(state: TrainState, records, coarse, config: RunConfig, round_: int) -> None:
    rng = _rng(config, round_, _PHASE_B)
    scale_nets = {
        role: net.release(config.scale_release_confidence) if net.bypass else net
        for role, net in state.scale_nets.items()
    }
    for step in range(1, config.phase_steps + 1):
        batch = draw_batch(records, coarse, config.batch_size, rng)
        result = loss_pairwise(batch, state.grad_nets, scale_nets, {GRAD_NET}, config.joint_learning)
        _check_loss(result.loss, "B", round_, config)
        scale_nets = {role: net.step(result.scale_net_grads[role], config.lr) for role, net in scale_nets.items()}
        jflogger.debug(f"Round {round_} phase B step {step}: loss {result.loss:.6g}.")
    state.scale_nets = scale_nets


def train(
    dataset: Sequence[SceneRecord],
    config: RunConfig,
    # Continue from a saved state instead of starting over.
    state: Optional[TrainState] = None,
    # Called after the global net is trained and after every round; the command line saves a checkpoint here.
    on_progress: Optional[Callable[[TrainState], None]] = None,
) -> TrainState:
    _check_dataset(dataset, config)
    state = state or TrainState.create(config)
    if not state.global_trained:
        train_global(state, dataset, config)
        if on_progress:
            on_progress(state)

    eval_coarse = _coarse_depths(dataset, state.global_net)
    eval_batch = draw_batch(dataset, eval_coarse, 4 * config.batch_size, _rng(config, 0, _EVAL))
    if state.last_loss() is None:
        initial = _round_loss(state, eval_batch, config)
        _check_loss(initial, "initial", 0, config)
        state.losses.append(LossRow(0, "initial", initial))
        jflogger.info(f"Pairwise loss before alternation: {initial:.6g}.")

    while not state.converged and state.round < config.rounds:
        round_ = state.round + 1
        records: Sequence[SceneRecord] = dataset
        if config.augment:
            rng = _rng(config, round_, _AUGMENT)
            records = [augment(r, int(rng.integers(2**32))) for r in dataset]
        coarse = _coarse_depths(records, state.global_net)
        before = state.last_loss()

        train_phase_a(state, records, coarse, config, round_)
        loss = _round_loss(state, eval_batch, config)
        _check_loss(loss, "A", round_, config)
        state.losses.append(LossRow(round_, "A", loss))
        jflogger.info(f"Round {round_} phase A: pairwise loss {loss:.6g}.")

        if config.gradient_scale:
            train_phase_b(state, records, coarse, config, round_)
            loss = _round_loss(state, eval_batch, config)
            _check_loss(loss, "B", round_, config)
            state.losses.append(LossRow(round_, "B", loss))
            jflogger.info(f"Round {round_} phase B: pairwise loss {loss:.6g}.")

        state.round = round_
        if before is not None and before > 0 and (before - loss) / before < config.round_tol:
            state.converged = True
            jflogger.info(f"Stopping after round {round_}: relative improvement below {config.round_tol}.")
        if on_progress:
            on_progress(state)
    return state


# Inference
# =========
@dataclass
class LevelTrace:
    level: int
    hw: Tuple[int, int]
    # The total energy after each accepted inner iteration.
    energies: List[float] = field(default_factory=list)
    # The energy of the estimates each accepted iteration started from, under that iteration's targets; None for the first iteration.
    before: List[Optional[float]] = field(default_factory=list)
    # The inner iteration whose solve raised the energy above its starting point, if any.
    rejected: Optional[int] = None


# Estimates and targets while working on one level.
@dataclass
class InferenceState:
    level: int
    iteration: int
    d: Tensor
    a: Tensor
    s: Tensor
    targets: LevelTargets


@dataclass
class InferenceResult:
    # Log depth, ``(H, W, 1)``; log albedo and log shading, ``(H, W, 3)``.
    depth: Tensor
    albedo: Tensor
    shading: Tensor
    trace: List[LevelTrace]

    @property
    def depth_linear(self) -> Tensor:
        return np.exp(self.depth)


def _confidences(state: TrainState, guidance: Tuple[Tensor, Tensor, Tensor], use_scale: bool, stride: int):
    if not use_scale:
        return tuple(np.ones(g.shape[:2] + (n,)) for g, n in zip(guidance, (2, 6, 6)))
    return tuple(scale_net_forward(g, state.scale_nets[role], stride) for g, role in zip(guidance, ROLES))


# Guidance stacks built from predicted gradient fields, for the first inner iteration when no estimates exist yet.
def _predicted_guidance(i: Tensor, fields: Tuple[GradientField, GradientField, GradientField]):
    mi = squared_magnitude_channels(forward_gradient(i)).values
    md, ma, ms = (squared_magnitude_channels(f).values for f in fields)
    return (
        np.concatenate([mi, ma, ms], axis=-1),
        np.concatenate([mi, md, ms], axis=-1),
        np.concatenate([mi, md, ma], axis=-1),
    )


def infer_level(
    state: TrainState,
    config: RunConfig,
    level: int,
    image: MultiChannelImage,
    d_star: Tensor,
    prev: Optional[Tuple[Tensor, Tensor, Tensor]],
    baseline_global_only: bool = False,
) -> Tuple[InferenceState, LevelTrace]:
    energy_config = config.energy
    use_scale = config.gradient_scale and not baseline_global_only
    if baseline_global_only:
        energy_config = energy_config.copy(update={"lambda_d": 0.0})
    i = image.values
    hw = image.hw
    lum = luminance_weight(to_linear(image), energy_config.epsilon).values
    fields = gradient_net_forward(i, d_star, state.grad_nets, config.joint_learning, config.tile_stride)
    guidance = _predicted_guidance(i, fields)
    trace = LevelTrace(level, hw)
    n = hw[0] * hw[1]
    max_iters = energy_config.max_iters_for(2 * n)
    current: Optional[InferenceState] = None

    for k in range(1, energy_config.inner_iters + 1):
        conf = _confidences(state, guidance, use_scale, config.tile_stride)
        d_prev, a_prev, s_prev = prev if prev is not None else (None, None, None)
        targets = LevelTargets(
            i,
            lum,
            d_star,
            *(f.scaled(c) for f, c in zip(fields, conf)),  # type: ignore
            # The baseline keeps the global prediction at every level.
            None if baseline_global_only else d_prev,
            a_prev,
            s_prev,
        )
        # The estimates going into this iteration, scored under its targets.
        before = None if current is None else joint_energy(energy_config, targets, current.d, current.a, current.s).total
        try:
            d = solve_depth(
                d_star, targets.d_prev, targets.guided_depth, energy_config.lambda_d, energy_config.solver_tol, max_iters
            )
            a, s = solve_intrinsic(
                i,
                lum,
                targets.guided_albedo,
                targets.guided_shading,
                targets.a_prev,
                targets.s_prev,
                energy_config.lambda_a,
                energy_config.lambda_s,
                energy_config.solver_tol,
                max_iters,
            )
        except SolverError as e:
            raise e.at(level, k) from e
        total = joint_energy(energy_config, targets, d, a, s).total
        if before is not None and total > before + 1e-9 * max(1.0, abs(before)):
            jflogger.warning(
                f"Level {level}, inner iteration {k}: the solve raised the energy from {before:.9g} to {total:.9g}; keeping the previous estimates."
            )
            trace.rejected = k
            break
        trace.before.append(before)
        trace.energies.append(total)
        current = InferenceState(level, k, d, a, s, targets)
        jflogger.debug(f"Level {level}, inner iteration {k}: energy {before} -> {total:.9g}.")
        if before is not None and before - total <= energy_config.inner_tol * abs(before):
            break
        guidance = guidance_stacks(i, d, a, s)

    assert current is not None
    return current, trace


def infer(
    image: MultiChannelImage,
    state: TrainState,
    config: RunConfig,
    # Skip the gradient-domain refinement of depth: return the global net's prediction, with albedo and shading solved at unit confidence.
    baseline_global_only: bool = False,
) -> InferenceResult:
    if image.domain is not Domain.log or image.channels != 3:
        raise ShapeError("infer expects a 3-channel log-domain image.")
    levels = config.levels if config.coarse_to_fine else 1
    pyramid = build_pyramid(image, levels)
    prev: Optional[Tuple[Tensor, Tensor, Tensor]] = None
    traces = []
    current = None
    for level, img in enumerate(pyramid, 1):
        d_star = predict_coarse_depth(img, state.global_net)
        if prev is not None:
            prev = tuple(bilinear_resize(p, img.hw).values for p in prev)  # type: ignore
        current, trace = infer_level(state, config, level, img, d_star, prev, baseline_global_only)
        traces.append(trace)
        jflogger.info(
            f"Level {level} ({img.hw[0]}x{img.hw[1]}): {len(trace.energies)} inner iterations, final energy {trace.energies[-1]:.9g}."
        )
        prev = (current.d, current.a, current.s)
    assert current is not None
    return InferenceResult(current.d, current.a, current.s, traces)
