from collections import Counter

import pytest
import torch

from packdit.core.diffusion import build_schedule
from packdit.core.motion import MotionSequence
from packdit.exceptions import ValidationError
from packdit.models.config import default_task_probs
from packdit.models.tasks import StageKind, TaskKind
from packdit.networks.dit import PackDiT
from packdit.training.batches import MotionBatch, PairedBatch, TextBatch, motion_batch
from packdit.training.stages import (
    conditional_objective,
    draw_task,
    joint_objective,
    make_optimizer,
    stage_objective,
    step_conditional,
    step_joint,
    step_uncond,
    uncond_objective,
)
from packdit.utils.torch_utils import make_generator

from tests.helpers import TEST_T, float32_stats, perturb, small_dit_config, toy_items


def paired_batch(seed: int = 0, batch: int = 4) -> PairedBatch:
    generator = torch.Generator().manual_seed(seed)
    tokens = torch.randn(batch, 6, 8, generator=generator)
    mask = torch.ones(batch, 6, dtype=torch.bool)
    mask[0, 5] = False
    latents = torch.randn(batch, 10, 4, generator=generator)
    return PairedBatch(MotionBatch(tokens, mask), TextBatch(latents))


def snapshot(module: torch.nn.Module):
    return {k: v.detach().clone() for k, v in module.state_dict().items()}


def assert_unchanged(module: torch.nn.Module, before) -> None:
    for key, value in module.state_dict().items():
        torch.testing.assert_close(value, before[key], rtol=0, atol=0)


def assert_changed(module: torch.nn.Module, before) -> None:
    assert any(not torch.equal(value, before[key]) for key, value in module.state_dict().items())


class TestObjectives:
    def setup_method(self):
        torch.manual_seed(0)
        self.model = perturb(PackDiT(small_dit_config()), seed=2)
        self.schedule = build_schedule("cosine", TEST_T)
        self.batch = paired_batch()

    def test_uncond_motion_loss_ignores_text_pairing(self):
        permuted = TextBatch(self.batch.text.latents[torch.tensor([2, 0, 3, 1])])
        first = uncond_objective(self.model, self.batch.motion, self.batch.text, self.schedule, make_generator(4))
        second = uncond_objective(self.model, self.batch.motion, permuted, self.schedule, make_generator(4))
        assert first.terms.loss_motion == second.terms.loss_motion
        assert first.terms.t_motion == second.terms.t_motion

    def test_uncond_sides_are_optional(self):
        motion_only = uncond_objective(self.model, self.batch.motion, None, self.schedule, make_generator(0))
        text_only = uncond_objective(self.model, None, self.batch.text, self.schedule, make_generator(0))
        assert motion_only.terms.task == TaskKind.UNCOND_MOTION.value
        assert motion_only.terms.loss_text == 0.0
        assert text_only.terms.loss_motion == 0.0
        with pytest.raises(ValidationError):
            uncond_objective(self.model, None, None, self.schedule, make_generator(0))

    def test_joint_shares_one_timestep(self):
        loss = joint_objective(self.model, self.batch, self.schedule, make_generator(1))
        assert loss.terms.t_motion == loss.terms.t_text
        assert loss.terms.total == pytest.approx(loss.terms.loss_motion + loss.terms.loss_text, rel=1e-6)

    def test_lambda_weights_text_loss(self):
        loss = joint_objective(self.model, self.batch, self.schedule, make_generator(1), lam=0.0)
        assert loss.terms.total == pytest.approx(loss.terms.loss_motion)

    def test_conditional_conditions_at_clean_timestep(self):
        t2m = conditional_objective(self.model, self.batch, TaskKind.T2M, self.schedule, make_generator(2))
        assert t2m.terms.t_text == [0] * 4
        assert t2m.terms.loss_text == 0.0
        m2t = conditional_objective(self.model, self.batch, TaskKind.M2T, self.schedule, make_generator(2))
        assert m2t.terms.t_motion == [0] * 4
        assert m2t.terms.loss_motion == 0.0
        with pytest.raises(ValidationError):
            conditional_objective(self.model, self.batch, TaskKind.JOINT, self.schedule, make_generator(2))

    def test_paired_stages_refuse_unpaired_batches(self):
        unpaired = PairedBatch(self.batch.motion, self.batch.text, paired=False)
        with pytest.raises(ValidationError):
            joint_objective(self.model, unpaired, self.schedule, make_generator(0))
        with pytest.raises(ValidationError):
            conditional_objective(self.model, unpaired, TaskKind.T2M, self.schedule, make_generator(0))

    def test_mixed_stage_needs_probabilities(self):
        with pytest.raises(ValidationError):
            stage_objective(self.model, self.batch, StageKind.MIXED, self.schedule, make_generator(0))
        loss = stage_objective(
            self.model, self.batch, StageKind.MIXED, self.schedule, make_generator(0),
            task_probs={TaskKind.JOINT: 1.0},
        )
        assert loss.terms.task == TaskKind.JOINT.value


class TestTaskSampling:
    def test_frequencies_follow_probabilities(self):
        probs = default_task_probs()
        generator = make_generator(0)
        counts = Counter(draw_task(probs, generator) for _ in range(10000))
        for task, p in probs.items():
            assert abs(counts[task] / 10000 - p) < 0.02

    def test_degenerate_distribution(self):
        generator = make_generator(0)
        assert {draw_task({TaskKind.M2T: 1.0}, generator) for _ in range(50)} == {TaskKind.M2T}

    def test_invalid_distribution(self):
        with pytest.raises(ValidationError):
            draw_task({}, make_generator(0))
        with pytest.raises(ValidationError):
            draw_task({TaskKind.T2M: -1.0, TaskKind.M2T: 2.0}, make_generator(0))


class TestUpdates:
    def setup_method(self):
        torch.manual_seed(0)
        self.model = perturb(PackDiT(small_dit_config()), seed=2)
        self.schedule = build_schedule("cosine", TEST_T)
        self.batch = paired_batch()
        self.optimizer = make_optimizer(self.model, 1e-3)

    def test_t2m_step_keeps_text_stack_frozen(self):
        text_before = snapshot(self.model.text_dit)
        motion_before = snapshot(self.model.motion_dit)
        step_conditional(self.model, self.batch, TaskKind.T2M, self.schedule, make_generator(0), self.optimizer)
        assert_unchanged(self.model.text_dit, text_before)
        assert_changed(self.model.motion_dit, motion_before)
        assert all(p.requires_grad for p in self.model.text_dit.parameters())

    def test_m2t_step_keeps_motion_stack_frozen(self):
        step_joint(self.model, self.batch, self.schedule, make_generator(0), self.optimizer)
        motion_before = snapshot(self.model.motion_dit)
        step_conditional(self.model, self.batch, TaskKind.M2T, self.schedule, make_generator(1), self.optimizer)
        assert_unchanged(self.model.motion_dit, motion_before)

    def test_optimizer_covers_exactly_the_diffusion_stacks(self):
        parameters = {id(p) for group in self.optimizer.param_groups for p in group["params"]}
        assert parameters == {id(p) for p in self.model.diffusion_parameters()}

    def test_uncond_step_returns_terms(self):
        terms = step_uncond(
            self.model, self.batch.motion, self.batch.text, self.schedule, make_generator(0), self.optimizer
        )
        assert terms.total >= 0
        assert terms.task == StageKind.UNCOND.value


class TestBatches:
    def test_motion_batch_pads_to_longest(self):
        items = toy_items(3, n_frames=40)
        motions = [m for m, _ in items]
        stats = float32_stats(motions)
        short = MotionSequence(motions[0].schema, motions[0].data[:33])
        batch = motion_batch([short, motions[1]], stats, patch_size=2)
        assert batch.tokens.shape == (2, 20, 16)
        assert batch.mask[0].sum() == 17
        assert batch.mask[1].all()
        with pytest.raises(ValidationError):
            motion_batch([], stats, 1)
