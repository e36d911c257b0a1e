"""Sign-gradient attack family under an L-inf budget.

Families: single-step FGSM, iterative I-FGSM, and the momentum variants
MI-FGSM / NI-FGSM. Any of them can run with a non-constant step-size schedule
and with the dual-example strategy enabled, in which case two trajectories
are maintained: the decoy ``x_adv`` explores with the raw per-step direction,
while the dual ``x_dual`` steps along the sign of the running equal-weight
average of all directions sampled so far and is the returned example.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import LabeledSample, ensemble_input_gradient
from .numerics import clip_to_ball, elementwise_sign
from .schedules import ScheduleSpec, normalized_schedule
from .transforms import TransformSpec, dim_transform, sim_gradient, tim_kernel, tim_smooth_gradient

ATTACK_FAMILIES = ("fgsm", "ifgsm", "mifgsm", "nifgsm")
_MOMENTUM_FAMILIES = ("mifgsm", "nifgsm")


@dataclass(frozen=True)
class AttackConfig:
    """Attack family, schedule, and strategy switches.

    ``decay`` is the momentum decay factor, used only by mifgsm/nifgsm.
    ``l1_normalize_grad`` switches on the classic MI-FGSM g/||g||_1
    normalization before the momentum accumulation (off by default: the
    momentum update is literally decay * m + g). ``random_start`` initializes
    the decoy at a uniform point of the epsilon ball instead of the benign
    sample; the dual always starts at the benign sample.
    """

    family: str
    schedule: ScheduleSpec
    sd_enabled: bool = False
    decay: float = 1.0
    transform: TransformSpec | None = None
    rng_seed: int = 0
    l1_normalize_grad: bool = False
    random_start: bool = False

    def validate(self) -> None:
        if self.family not in ATTACK_FAMILIES:
            raise ValueError(f"unknown attack family {self.family!r}")
        self.schedule.validate()
        if self.family == "fgsm" and self.schedule.steps != 1:
            raise ValueError("fgsm is single-step; schedule.steps must be 1")
        if self.decay < 0:
            raise ValueError(f"decay must be non-negative, got {self.decay}")
        if self.transform is not None:
            self.transform.validate()


@dataclass
class AttackState:
    """Per-sample iteration state; arrays are owned by one worker."""

    t: int
    x_adv: np.ndarray  # decoy example
    x_dual: np.ndarray  # dual example
    momentum: np.ndarray
    direction_avg: np.ndarray  # equal-weight mean of directions fed so far


def initial_state(config: AttackConfig, sample: LabeledSample, rng=None) -> AttackState:
    x = np.asarray(sample.image, dtype=np.float64)
    x_adv = x.copy()
    if config.random_start:
        if rng is None:
            rng = _config_rng(config)
        eps = config.schedule.epsilon
        x_adv = clip_to_ball(x + rng.uniform(-eps, eps, size=x.shape), x, eps, 0.0, 1.0)
    return AttackState(
        t=0,
        x_adv=x_adv,
        x_dual=x.copy(),
        momentum=np.zeros_like(x),
        direction_avg=np.zeros_like(x),
    )


def _config_rng(config: AttackConfig):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.rng_seed)))


def _as_model_list(models):
    return list(models) if isinstance(models, (list, tuple)) else [models]


def momentum_update(m: np.ndarray, g: np.ndarray, decay: float) -> np.ndarray:
    """Accumulated direction: decay * m + g, no gradient normalization."""
    return decay * m + g


def dual_average_update(direction_avg: np.ndarray, g: np.ndarray, t: int) -> np.ndarray:
    """Equal-weight running mean: (avg * t + g) / (t + 1)."""
    if t < 0:
        raise ValueError(f"step counter must be non-negative, got {t}")
    if direction_avg.shape != g.shape:
        raise ValueError(f"shape mismatch: {direction_avg.shape} vs {g.shape}")
    return (direction_avg * t + g) / (t + 1)


def step_direction(config, state, sample, model_or_ensemble, rng=None, step_sizes=None):
    """Gradient sampled at the probe point of the current step.

    The probe is the decoy for fgsm/ifgsm/mifgsm and the Nesterov lookahead
    x_adv + alpha_t * decay * momentum for nifgsm. An ensemble contributes the
    gradient of the loss of its averaged logits. DIM replaces the probe input,
    SIM replaces the gradient computation; both shapes are preserved.
    """
    models = _as_model_list(model_or_ensemble)
    probe = state.x_adv
    if config.family == "nifgsm":
        if step_sizes is None:
            step_sizes = normalized_schedule(config.schedule)
        probe = probe + step_sizes[state.t] * config.decay * state.momentum
    tspec = config.transform
    if tspec is not None and tspec.kind == "dim":
        if rng is None:
            rng = _config_rng(config)
        probe = dim_transform(probe, tspec, rng)
    if tspec is not None and tspec.kind == "sim":
        return sim_gradient(models, probe, sample.label, tspec.sim_copies)
    return ensemble_input_gradient(models, probe, sample.label)


def _l1_normalized(g):
    norm = np.sum(np.abs(g))
    return g if norm == 0.0 else g / norm


def attack_step(config, state, sample, models, rng=None, step_sizes=None) -> AttackState:
    """Advance both trajectories by one iteration.

    The decoy steps along sign(d) where d is the raw gradient (fgsm/ifgsm) or
    the momentum accumulation (mifgsm/nifgsm), smoothed by TIM when
    configured. With the dual example enabled, d also enters the equal-weight
    running average and the dual steps along its sign. Both trajectories are
    projected onto the epsilon ball around the benign sample intersected with
    [0, 1] after every update.
    """
    steps = config.schedule.steps
    if state.t >= steps:
        raise ValueError(f"attack already ran its {steps} steps")
    if step_sizes is None:
        step_sizes = normalized_schedule(config.schedule)

    g = step_direction(config, state, sample, models, rng=rng, step_sizes=step_sizes)

    if config.family in _MOMENTUM_FAMILIES:
        g_in = _l1_normalized(g) if config.l1_normalize_grad else g
        momentum = momentum_update(state.momentum, g_in, config.decay)
        d = momentum
    else:
        momentum = state.momentum
        d = g

    if config.transform is not None and config.transform.kind == "tim":
        d = tim_smooth_gradient(d, tim_kernel(config.transform.tim_kernel_size, config.transform.sigma()))

    x = np.asarray(sample.image, dtype=np.float64)
    eps = config.schedule.epsilon
    alpha = step_sizes[state.t]
    x_adv = clip_to_ball(state.x_adv + alpha * elementwise_sign(d), x, eps, 0.0, 1.0)

    if config.sd_enabled:
        direction_avg = dual_average_update(state.direction_avg, d, state.t)
        x_dual = clip_to_ball(
            state.x_dual + alpha * elementwise_sign(direction_avg), x, eps, 0.0, 1.0
        )
    else:
        direction_avg = state.direction_avg
        x_dual = x_adv.copy()

    return AttackState(
        t=state.t + 1,
        x_adv=x_adv,
        x_dual=x_dual,
        momentum=momentum,
        direction_avg=direction_avg,
    )


def run_attack(config: AttackConfig, sample: LabeledSample, models):
    """Run the configured attack; returns (adversarial example, state trace).

    The trace holds the initial state followed by the state after each of the
    T steps. The returned example is the dual trajectory's endpoint when the
    dual example is enabled, the decoy's otherwise. All randomness (DIM, the
    optional random start) derives from PCG64 seeded with config.rng_seed, so
    identical configs produce bit-identical outputs.
    """
    config.validate()
    model_list = _as_model_list(models)
    step_sizes = normalized_schedule(config.schedule)
    rng = _config_rng(config)
    state = initial_state(config, sample, rng=rng)
    trace = [state]
    for _ in range(config.schedule.steps):
        state = attack_step(config, state, sample, model_list, rng=rng, step_sizes=step_sizes)
        trace.append(state)
    x_out = state.x_dual if config.sd_enabled else state.x_adv
    return x_out, trace
