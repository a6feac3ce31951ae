"""Stage objectives and optimizer steps.

Objectives build the loss only; the ``step_*`` functions add the Adam update so
gradient checks and the trainer share one definition of every loss.
"""

from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import torch
import torch.nn as nn

from ..core.diffusion import NoiseSchedule, combine_losses, epsilon_loss, q_sample, sample_timesteps
from ..exceptions import ValidationError
from ..models.results import DiffusionLossTerms
from ..models.tasks import TRAINABLE_TASKS, Coupling, StageKind, TaskKind
from ..networks.dit import PackDiT
from ..utils.torch_utils import frozen
from .batches import MotionBatch, PairedBatch, TextBatch


@dataclass
class StageLoss:
    total: torch.Tensor
    terms: DiffusionLossTerms


def _noise_like(x: torch.Tensor, rng: torch.Generator) -> torch.Tensor:
    return torch.randn(x.shape, generator=rng, dtype=x.dtype)


def _terms(
    loss_motion: Optional[torch.Tensor],
    loss_text: Optional[torch.Tensor],
    lam: float,
    task: str,
    t_motion: Optional[torch.Tensor] = None,
    t_text: Optional[torch.Tensor] = None,
) -> StageLoss:
    zero = None
    for loss in (loss_motion, loss_text):
        if loss is not None:
            zero = torch.zeros((), dtype=loss.dtype)
    loss_motion = zero if loss_motion is None else loss_motion
    loss_text = zero if loss_text is None else loss_text
    total = loss_motion + lam * loss_text
    terms = combine_losses(float(loss_motion.detach()), float(loss_text.detach()), lam)
    terms.task = task
    terms.t_motion = t_motion.tolist() if t_motion is not None else None
    terms.t_text = t_text.tolist() if t_text is not None else None
    return StageLoss(total=total, terms=terms)


def uncond_objective(
    model: PackDiT,
    motion: Optional[MotionBatch],
    text: Optional[TextBatch],
    schedule: NoiseSchedule,
    rng: torch.Generator,
    lam: float = 1.0,
) -> StageLoss:
    """Independent t per side, no coupling; either side may be skipped."""
    if motion is None and text is None:
        raise ValidationError("unconditional training needs motion, text or both")
    loss_m = loss_t = t_m = t_t = None
    if motion is not None:
        if motion.size == 0:
            raise ValidationError("empty motion batch")
        t_m = sample_timesteps(motion.size, schedule, rng)
        eps_m = _noise_like(motion.tokens, rng)
        x_m = q_sample(motion.tokens, t_m, eps_m, schedule)
        pred, _ = model.forward_pair(x_m, t_m, None, None, coupling=Coupling.NONE, motion_mask=motion.mask)
        loss_m = epsilon_loss(pred, eps_m, motion.mask)
    if text is not None:
        if text.size == 0:
            raise ValidationError("empty text batch")
        t_t = sample_timesteps(text.size, schedule, rng)
        eps_t = _noise_like(text.latents, rng)
        x_t = q_sample(text.latents, t_t, eps_t, schedule)
        _, pred = model.forward_pair(None, None, x_t, t_t, coupling=Coupling.NONE)
        loss_t = epsilon_loss(pred, eps_t)
    if text is None:
        label = TaskKind.UNCOND_MOTION.value
    elif motion is None:
        label = TaskKind.UNCOND_TEXT.value
    else:
        label = StageKind.UNCOND.value
    return _terms(loss_m, loss_t, lam, label, t_m, t_t)


def joint_objective(
    model: PackDiT,
    batch: PairedBatch,
    schedule: NoiseSchedule,
    rng: torch.Generator,
    lam: float = 1.0,
    coupling: Coupling = Coupling.MUTUAL,
) -> StageLoss:
    """One shared t for both sides, each side reading the other's noisy tokens."""
    batch.require_pairs("joint training")
    t = sample_timesteps(batch.motion.size, schedule, rng)
    eps_m = _noise_like(batch.motion.tokens, rng)
    eps_t = _noise_like(batch.text.latents, rng)
    x_m = q_sample(batch.motion.tokens, t, eps_m, schedule)
    x_t = q_sample(batch.text.latents, t, eps_t, schedule)
    pred_m, pred_t = model.forward_pair(
        x_m, t, x_t, t, coupling=coupling, motion_mask=batch.motion.mask
    )
    loss_m = epsilon_loss(pred_m, eps_m, batch.motion.mask)
    loss_t = epsilon_loss(pred_t, eps_t)
    return _terms(loss_m, loss_t, lam, TaskKind.JOINT.value, t, t)


def conditional_objective(
    model: PackDiT,
    batch: PairedBatch,
    direction: TaskKind,
    schedule: NoiseSchedule,
    rng: torch.Generator,
) -> StageLoss:
    """Noise only the generating side; the condition goes in clean at t=0 through its frozen stack."""
    batch.require_pairs(f"{direction.value} training")
    size = batch.motion.size
    zeros = torch.zeros(size, dtype=torch.long)
    t = sample_timesteps(size, schedule, rng)
    if direction == TaskKind.T2M:
        eps = _noise_like(batch.motion.tokens, rng)
        x = q_sample(batch.motion.tokens, t, eps, schedule)
        with frozen(model.text_dit):
            pred, _ = model.forward_pair(
                x, t, batch.text.latents, zeros,
                coupling=Coupling.MOTION_READS_TEXT, motion_mask=batch.motion.mask,
            )
        return _terms(epsilon_loss(pred, eps, batch.motion.mask), None, 0.0, direction.value, t_motion=t, t_text=zeros)
    if direction == TaskKind.M2T:
        eps = _noise_like(batch.text.latents, rng)
        x = q_sample(batch.text.latents, t, eps, schedule)
        with frozen(model.motion_dit):
            _, pred = model.forward_pair(
                batch.motion.tokens, zeros, x, t,
                coupling=Coupling.TEXT_READS_MOTION, motion_mask=batch.motion.mask,
            )
        return _terms(None, epsilon_loss(pred, eps), 1.0, direction.value, t_motion=zeros, t_text=t)
    raise ValidationError(f"conditional training is t2m or m2t, got {direction.value}")


def draw_task(task_probs: Mapping[TaskKind, float], rng: torch.Generator) -> TaskKind:
    """Sample one trainable task from ``task_probs``."""
    weights = torch.tensor([float(task_probs.get(task, 0.0)) for task in TRAINABLE_TASKS], dtype=torch.float64)
    if (weights < 0).any() or weights.sum() <= 0:
        raise ValidationError(f"invalid task probabilities {dict(task_probs)}")
    return TRAINABLE_TASKS[int(torch.multinomial(weights, 1, generator=rng))]


def task_objective(
    model: PackDiT,
    batch: PairedBatch,
    task: TaskKind,
    schedule: NoiseSchedule,
    rng: torch.Generator,
    lam: float = 1.0,
) -> StageLoss:
    if task in (TaskKind.T2M, TaskKind.M2T):
        return conditional_objective(model, batch, task, schedule, rng)
    if task == TaskKind.JOINT:
        return joint_objective(model, batch, schedule, rng, lam)
    if task == TaskKind.UNCOND_MOTION:
        return uncond_objective(model, batch.motion, None, schedule, rng, lam)
    if task == TaskKind.UNCOND_TEXT:
        return uncond_objective(model, None, batch.text, schedule, rng, lam)
    raise ValidationError(f"task {task.value} is inference-only")


def mixed_objective(
    model: PackDiT,
    batch: PairedBatch,
    task_probs: Mapping[TaskKind, float],
    schedule: NoiseSchedule,
    rng: torch.Generator,
    lam: float = 1.0,
) -> StageLoss:
    return task_objective(model, batch, draw_task(task_probs, rng), schedule, rng, lam)


def stage_objective(
    model: PackDiT,
    batch: PairedBatch,
    stage: StageKind,
    schedule: NoiseSchedule,
    rng: torch.Generator,
    lam: float = 1.0,
    task_probs: Optional[Mapping[TaskKind, float]] = None,
) -> StageLoss:
    """Loss of one training step of ``stage``."""
    if stage == StageKind.UNCOND:
        return uncond_objective(model, batch.motion, batch.text, schedule, rng, lam)
    if stage == StageKind.JOINT_GEN:
        return joint_objective(model, batch, schedule, rng, lam)
    if stage == StageKind.T2M:
        return conditional_objective(model, batch, TaskKind.T2M, schedule, rng)
    if stage == StageKind.M2T:
        return conditional_objective(model, batch, TaskKind.M2T, schedule, rng)
    if stage == StageKind.MIXED:
        if task_probs is None:
            raise ValidationError("the mixed stage needs task probabilities")
        return mixed_objective(model, batch, task_probs, schedule, rng, lam)
    raise ValidationError(f"unknown stage {stage}")


def apply_update(
    model: PackDiT, loss: StageLoss, optimizer: torch.optim.Optimizer, grad_clip: float = 1.0
) -> DiffusionLossTerms:
    """Backward, global-norm clip and one optimizer step. Frozen parameters keep grad None."""
    optimizer.zero_grad(set_to_none=True)
    loss.total.backward()
    params = [p for p in model.diffusion_parameters() if p.grad is not None]
    if params:
        nn.utils.clip_grad_norm_(params, grad_clip)
    optimizer.step()
    return loss.terms


def step_uncond(model, motion_batch, text_batch, schedule, rng, optimizer, lam=1.0, grad_clip=1.0):
    return apply_update(model, uncond_objective(model, motion_batch, text_batch, schedule, rng, lam), optimizer, grad_clip)


def step_joint(model, paired_batch, schedule, rng, optimizer, lam=1.0, grad_clip=1.0):
    return apply_update(model, joint_objective(model, paired_batch, schedule, rng, lam), optimizer, grad_clip)


def step_conditional(model, paired_batch, direction, schedule, rng, optimizer, grad_clip=1.0):
    return apply_update(
        model, conditional_objective(model, paired_batch, direction, schedule, rng), optimizer, grad_clip
    )


def step_mixed(model, paired_batch, task_probs, schedule, rng, optimizer, lam=1.0, grad_clip=1.0):
    return apply_update(
        model, mixed_objective(model, paired_batch, task_probs, schedule, rng, lam), optimizer, grad_clip
    )


def make_optimizer(model: PackDiT, learning_rate: float) -> torch.optim.Adam:
    return torch.optim.Adam(model.diffusion_parameters(), lr=learning_rate, betas=(0.9, 0.999), eps=1e-8)


def parameter_gradients(
    model: PackDiT,
    batch: PairedBatch,
    stage: StageKind,
    schedule: NoiseSchedule,
    rng: torch.Generator,
    lam: float = 1.0,
    task_probs: Optional[Mapping[TaskKind, float]] = None,
) -> Dict[str, torch.Tensor]:
    """Gradient of the stage loss for every DiT parameter; untouched ones are exact zeros."""
    named = [(n, p) for n, p in model.named_parameters() if not n.startswith("projection.")]
    for _, param in named:
        param.grad = None
    loss = stage_objective(model, batch, stage, schedule, rng, lam, task_probs)
    loss.total.backward()
    grads = {}
    for name, param in named:
        grads[name] = param.grad.detach().clone() if param.grad is not None else torch.zeros_like(param)
        param.grad = None
    return grads
