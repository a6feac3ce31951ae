import numpy as np
import pytest
import torch

from packdit.core.diffusion import build_schedule
from packdit.exceptions import ValidationError
from packdit.models.config import DIT_PRESETS, DiTConfig
from packdit.models.tasks import Coupling, StageKind
from packdit.networks.dit import Attention, PackDiT
from packdit.training.batches import MotionBatch, PairedBatch, TextBatch
from packdit.training.stages import parameter_gradients, stage_objective
from packdit.utils.torch_utils import count_parameters, make_generator

from tests.helpers import TEST_T, perturb, small_dit_config, zero_mutual


def inputs(seed: int = 0, batch: int = 2, n_motion: int = 6, n_text: int = 10, dtype=torch.float32):
    generator = torch.Generator().manual_seed(seed)
    motion = torch.randn(batch, n_motion, 8, generator=generator, dtype=dtype)
    text = torch.randn(batch, n_text, 4, generator=generator, dtype=dtype)
    return motion, text


class TestConstruction:
    def test_fresh_model_predicts_zero_noise(self):
        torch.manual_seed(0)
        model = PackDiT(small_dit_config())
        motion, text = inputs()
        out_m, out_t = model.forward_pair(motion, 5, text, 5)
        assert torch.count_nonzero(out_m) == 0
        assert torch.count_nonzero(out_t) == 0

    def test_presets_build(self):
        for name in ("micro", "nano"):
            config = DiTConfig(**DIT_PRESETS[name])
            model = PackDiT(config)
            assert count_parameters(model.motion_dit) > 0
            assert len(model.motion_dit.blocks) == config.depth

    def test_width_must_divide_heads(self):
        with pytest.raises(ValueError):
            DiTConfig(width=10, heads=4)


class TestMutualAttention:
    def setup_method(self):
        torch.manual_seed(0)
        self.model = perturb(PackDiT(small_dit_config()), seed=3)
        self.model.eval()

    def test_zero_projection_leaves_stacks_independent(self):
        zero_mutual(self.model)
        motion, text = inputs()
        coupled = self.model.forward_pair(motion, 7, text, 3, coupling=Coupling.MUTUAL)
        apart = self.model.forward_pair(motion, 7, text, 3, coupling=Coupling.NONE)
        torch.testing.assert_close(coupled[0], apart[0], rtol=0, atol=0)
        torch.testing.assert_close(coupled[1], apart[1], rtol=0, atol=0)

    def test_no_coupling_ignores_the_other_side(self):
        motion, text = inputs()
        _, other_text = inputs(seed=9)
        first, _ = self.model.forward_pair(motion, 4, text, 4, coupling=Coupling.NONE)
        second, _ = self.model.forward_pair(motion, 4, other_text, 4, coupling=Coupling.NONE)
        alone, _ = self.model.forward_pair(motion, 4, None, None)
        torch.testing.assert_close(first, second, rtol=0, atol=0)
        torch.testing.assert_close(first, alone, rtol=0, atol=0)

    def test_mutual_coupling_reads_the_other_side(self):
        motion, text = inputs()
        _, other_text = inputs(seed=9)
        first, _ = self.model.forward_pair(motion, 4, text, 4, coupling=Coupling.MUTUAL)
        second, _ = self.model.forward_pair(motion, 4, other_text, 4, coupling=Coupling.MUTUAL)
        assert not torch.allclose(first, second)

    def test_one_directional_coupling(self):
        motion, text = inputs()
        other_motion, _ = inputs(seed=9)
        _, text_a = self.model.forward_pair(motion, 4, text, 0, coupling=Coupling.MOTION_READS_TEXT)
        _, text_b = self.model.forward_pair(other_motion, 4, text, 0, coupling=Coupling.MOTION_READS_TEXT)
        torch.testing.assert_close(text_a, text_b, rtol=0, atol=0)

    def test_mutual_attend_updates_both_sides(self):
        motion_states = torch.randn(2, 6, 16)
        text_states = torch.randn(2, 10, 16)
        motion_out, text_out = self.model.mutual_attend(motion_states, text_states, 0)
        assert motion_out.shape == motion_states.shape
        assert text_out.shape == text_states.shape
        assert not torch.allclose(motion_out, motion_states)
        with pytest.raises(ValidationError):
            self.model.mutual_attend(motion_states, text_states[:, :0], 0)
        with pytest.raises(ValidationError):
            self.model.mutual_attend(motion_states, text_states, 1)

    def test_attention_rows_sum_to_one(self):
        attention = Attention(16, 2)
        x = torch.randn(3, 5, 16)
        context = torch.randn(3, 7, 16)
        key_mask = torch.ones(3, 7, dtype=torch.bool)
        key_mask[:, 5:] = False
        weights = attention.weights(x, context, key_mask)
        assert weights.shape == (3, 2, 5, 7)
        torch.testing.assert_close(weights.sum(dim=-1), torch.ones(3, 2, 5))
        assert torch.count_nonzero(weights[..., 5:]) == 0

    def test_masked_motion_keys_do_not_reach_text(self):
        motion, text = inputs()
        mask = torch.ones(2, 6, dtype=torch.bool)
        mask[:, 4:] = False
        changed = motion.clone()
        changed[:, 4:] += 5.0
        _, text_a = self.model.forward_pair(motion, 4, text, 4, motion_mask=mask)
        _, text_b = self.model.forward_pair(changed, 4, text, 4, motion_mask=mask)
        torch.testing.assert_close(text_a, text_b)

    def test_cached_condition_matches_live_condition(self):
        motion, text = inputs()
        live, _ = self.model.forward_pair(motion, 6, text, 0, coupling=Coupling.MOTION_READS_TEXT)
        states = self.model.condition_states("text", text)
        cached, _ = self.model.forward_pair(
            motion, 6, None, None, coupling=Coupling.MOTION_READS_TEXT, text_context=states
        )
        torch.testing.assert_close(live, cached)

    def test_mutual_enabled_flag(self):
        motion, text = inputs()
        disabled, _ = self.model.forward_pair(motion, 4, text, 4, mutual_enabled=False)
        apart, _ = self.model.forward_pair(motion, 4, text, 4, coupling=Coupling.NONE)
        torch.testing.assert_close(disabled, apart, rtol=0, atol=0)


class TestInputValidation:
    def setup_method(self):
        self.model = PackDiT(small_dit_config())

    def test_needs_a_side(self):
        with pytest.raises(ValidationError):
            self.model.forward_pair(None, None, None, None)

    def test_token_shapes(self):
        motion, text = inputs()
        with pytest.raises(ValidationError):
            self.model.forward_pair(motion[..., :5], 1, None, None)
        with pytest.raises(ValidationError):
            self.model.forward_pair(torch.zeros(2, 65, 8), 1, None, None)
        with pytest.raises(ValidationError):
            self.model.forward_pair(motion[:, :0], 1, None, None)
        with pytest.raises(ValidationError):
            self.model.forward_pair(motion, 1, text[:1], 1)

    def test_timestep_range(self):
        motion, _ = inputs()
        with pytest.raises(ValidationError):
            self.model.forward_pair(motion, TEST_T + 1, None, None)
        with pytest.raises(ValidationError):
            self.model.forward_pair(motion, torch.tensor([1, 2, 3]), None, None)

    def test_unknown_side(self):
        with pytest.raises(ValidationError):
            self.model.stack("audio")


def _batch(dtype=torch.float64) -> PairedBatch:
    generator = torch.Generator().manual_seed(11)
    tokens = torch.randn(2, 5, 8, generator=generator, dtype=dtype)
    mask = torch.ones(2, 5, dtype=torch.bool)
    mask[1, 4] = False
    latents = torch.randn(2, 6, 4, generator=generator, dtype=dtype)
    return PairedBatch(MotionBatch(tokens, mask), TextBatch(latents))


class TestGradients:
    """Autograd against central finite differences on a float64 model."""

    def setup_method(self):
        torch.manual_seed(0)
        config = small_dit_config(width=8, mlp_ratio=2.0, frequency_embedding_size=8, max_text_tokens=6)
        self.model = perturb(PackDiT(config), seed=5, scale=0.2).double()
        self.batch = _batch()
        self.schedule = build_schedule("linear", TEST_T)

    def _loss(self, stage: StageKind) -> float:
        with torch.no_grad():
            return float(stage_objective(self.model, self.batch, stage, self.schedule, make_generator(0)).total)

    @pytest.mark.parametrize(
        "stage, prefixes",
        [
            (StageKind.UNCOND, ("motion_dit.", "text_dit.")),
            (StageKind.JOINT_GEN, ("motion_dit.", "text_dit.")),
            (StageKind.T2M, ("motion_dit.",)),
            (StageKind.M2T, ("text_dit.",)),
        ],
    )
    def test_finite_differences(self, stage, prefixes):
        grads = parameter_gradients(self.model, self.batch, stage, self.schedule, make_generator(0))
        rng = np.random.default_rng(0)
        h = 1e-6
        checked = 0
        for name, param in self.model.named_parameters():
            if not name.startswith(prefixes):
                continue
            flat = param.data.view(-1)
            for index in rng.choice(flat.numel(), size=min(2, flat.numel()), replace=False):
                original = float(flat[index])
                flat[index] = original + h
                plus = self._loss(stage)
                flat[index] = original - h
                minus = self._loss(stage)
                flat[index] = original
                numeric = (plus - minus) / (2 * h)
                analytic = float(grads[name].view(-1)[index])
                assert abs(numeric - analytic) <= 1e-4 * max(abs(numeric), abs(analytic)) + 1e-7, name
                checked += 1
        assert checked > 20

    def test_frozen_side_gets_zero_gradient(self):
        grads = parameter_gradients(self.model, self.batch, StageKind.T2M, self.schedule, make_generator(0))
        assert all(torch.count_nonzero(g) == 0 for n, g in grads.items() if n.startswith("text_dit."))
        assert any(torch.count_nonzero(g) > 0 for n, g in grads.items() if n.startswith("motion_dit."))
        grads = parameter_gradients(self.model, self.batch, StageKind.M2T, self.schedule, make_generator(0))
        assert all(torch.count_nonzero(g) == 0 for n, g in grads.items() if n.startswith("motion_dit."))

    def test_joint_training_reaches_mutual_projections(self):
        grads = parameter_gradients(self.model, self.batch, StageKind.JOINT_GEN, self.schedule, make_generator(0))
        assert torch.count_nonzero(grads["motion_dit.blocks.0.mutual.attn.proj.weight"]) > 0
        assert torch.count_nonzero(grads["text_dit.blocks.0.mutual.attn.proj.weight"]) > 0

    def test_unconditional_training_skips_mutual_projections(self):
        grads = parameter_gradients(self.model, self.batch, StageKind.UNCOND, self.schedule, make_generator(0))
        assert torch.count_nonzero(grads["motion_dit.blocks.0.mutual.attn.proj.weight"]) == 0
