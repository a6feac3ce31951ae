import pytest
import torch

from packdit.core.diffusion import build_schedule
from packdit.models.config import default_task_probs
from packdit.models.tasks import StageKind
from packdit.networks.dit import PackDiT
from packdit.training.batches import PairedBatch, TextBatch, motion_batch
from packdit.training.stages import apply_update, make_optimizer, stage_objective
from packdit.utils.torch_utils import make_generator, set_seeds

from tests.helpers import TEST_T, float32_stats, small_dit_config, toy_items

OVERFIT_ITEMS = 16
OVERFIT_STEPS = 2000
EMA_DECAY = 0.98


def ema(values, decay: float = EMA_DECAY):
    smoothed, current = [], values[0]
    for value in values:
        current = decay * current + (1 - decay) * value
        smoothed.append(current)
    return smoothed


@pytest.fixture(scope="module")
def overfit_batch():
    items = toy_items(OVERFIT_ITEMS, seed=0, n_frames=40)
    motions = [m for m, _ in items]
    latents = torch.randn(OVERFIT_ITEMS, 10, 4, generator=torch.Generator().manual_seed(0))
    return PairedBatch(motion_batch(motions, float32_stats(motions), patch_size=1), TextBatch(latents))


@pytest.mark.slow
class TestOverfit:
    @pytest.mark.parametrize(
        "stage",
        [StageKind.UNCOND, StageKind.JOINT_GEN, StageKind.T2M, StageKind.M2T, StageKind.MIXED],
        ids=lambda s: s.value,
    )
    def test_loss_falls_on_sixteen_items(self, overfit_batch, stage):
        set_seeds(0)
        model = PackDiT(small_dit_config(depth=2, width=64, heads=4, frequency_embedding_size=64))
        schedule = build_schedule("cosine", TEST_T)
        optimizer = make_optimizer(model, 1e-3)
        rng = make_generator(0)
        probs = default_task_probs()
        losses = []
        for _ in range(OVERFIT_STEPS):
            loss = stage_objective(model, overfit_batch, stage, schedule, rng, task_probs=probs)
            losses.append(float(apply_update(model, loss, optimizer).total))
        smoothed = ema(losses)
        assert len(smoothed) == OVERFIT_STEPS
        assert smoothed[OVERFIT_STEPS - 1] < 0.1 * smoothed[49]
