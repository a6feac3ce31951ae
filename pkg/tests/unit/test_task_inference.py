import numpy as np
import pytest

from packdit.core.container import read_trace, write_trace
from packdit.core.motion import TOY, MotionSequence
from packdit.exceptions import ValidationError
from packdit.inference.requests import SampleRequest, inbetween_mask, prediction_mask
from packdit.inference.sampler import PackDiTPipeline
from packdit.models.tasks import TaskKind
from packdit.networks.checkpoint import CheckpointContents, save_checkpoint

from tests.helpers import TEST_T, float32_stats, toy_items

CAPTION = "a point moves left slowly"


@pytest.fixture
def pipeline(small_model, linear_schedule):
    model, codec = small_model
    stats = float32_stats([m for m, _ in toy_items(21)])
    return PackDiTPipeline(model, codec, linear_schedule, stats, TOY, device="cpu")


@pytest.fixture
def source_motion():
    return toy_items(1, seed=7, n_frames=40)[0][0]


def request(task, **fields):
    fields.setdefault("steps", 5)
    return SampleRequest(task=task, **fields)


class TestRequests:
    def test_default_masks(self):
        assert prediction_mask(8) == [True] * 4 + [False] * 4
        assert inbetween_mask(8) == [True, True, False, False, False, False, True, True]
        with pytest.raises(ValueError):
            prediction_mask(8, 1.5)
        with pytest.raises(ValueError):
            inbetween_mask(8, 0.6, 0.6)

    def test_inputs_per_task(self, source_motion):
        with pytest.raises(ValueError):
            SampleRequest(task=TaskKind.T2M)
        with pytest.raises(ValueError):
            SampleRequest(task=TaskKind.M2T)
        with pytest.raises(ValueError):
            SampleRequest(task=TaskKind.PREDICT)
        with pytest.raises(ValueError):
            SampleRequest(task=TaskKind.T2M, caption="   ")
        assert SampleRequest(task=TaskKind.JOINT).n_frames == 48

    def test_inpainting_fills_mask_and_length(self, source_motion):
        req = SampleRequest(task=TaskKind.INBETWEEN, motion=source_motion, n_frames=10)
        assert req.n_frames == source_motion.n_frames
        assert req.keep_mask == inbetween_mask(source_motion.n_frames)

    def test_mask_shape_rules(self, source_motion):
        n = source_motion.n_frames
        with pytest.raises(ValueError):
            SampleRequest(task=TaskKind.PREDICT, motion=source_motion, keep_mask=[True] * (n - 1))
        with pytest.raises(ValueError):
            SampleRequest(task=TaskKind.PREDICT, motion=source_motion, keep_mask=[False] + [True] * (n - 1))
        middle = [False] * n
        middle[n // 2] = True
        with pytest.raises(ValueError):
            SampleRequest(task=TaskKind.INBETWEEN, motion=source_motion, keep_mask=middle)

    def test_eta_and_steps_bounds(self):
        with pytest.raises(ValueError):
            SampleRequest(task=TaskKind.JOINT, eta=1.5)
        with pytest.raises(ValueError):
            SampleRequest(task=TaskKind.JOINT, steps=0)


class TestMotionSampling:
    def test_same_seed_same_sample(self, pipeline):
        first = pipeline.sample(request(TaskKind.UNCOND_MOTION, seed=3, n_frames=37))
        second = pipeline.sample(request(TaskKind.UNCOND_MOTION, seed=3, n_frames=37))
        other = pipeline.sample(request(TaskKind.UNCOND_MOTION, seed=4, n_frames=37))
        np.testing.assert_array_equal(first.motion.data, second.motion.data)
        assert not np.array_equal(first.motion.data, other.motion.data)
        assert first.motion.n_frames == 37
        assert first.caption is None

    def test_eta_sampling_is_seeded(self, pipeline):
        first = pipeline.sample(request(TaskKind.UNCOND_MOTION, seed=3, eta=1.0))
        second = pipeline.sample(request(TaskKind.UNCOND_MOTION, seed=3, eta=1.0))
        np.testing.assert_array_equal(first.motion.data, second.motion.data)

    def test_t2m_without_coupling_is_unconditional(self, pipeline):
        conditioned = pipeline.sample(request(TaskKind.T2M, caption=CAPTION, seed=1, mutual_enabled=False))
        uncond = pipeline.sample(request(TaskKind.UNCOND_MOTION, seed=1))
        np.testing.assert_array_equal(conditioned.motion.data, uncond.motion.data)

    def test_caption_changes_t2m_sample(self, pipeline):
        left = pipeline.sample(request(TaskKind.T2M, caption=CAPTION, seed=1))
        circle = pipeline.sample(request(TaskKind.T2M, caption="a point moves in a circle clockwise quickly", seed=1))
        assert not np.allclose(left.motion.data, circle.motion.data)

    def test_condition_cache_matches_live_condition(self, pipeline):
        live = pipeline.sample(request(TaskKind.T2M, caption=CAPTION, seed=2))
        cached = pipeline.sample(request(TaskKind.T2M, caption=CAPTION, seed=2, use_condition_cache=True))
        np.testing.assert_allclose(cached.motion.data, live.motion.data, rtol=1e-4, atol=1e-4)

    def test_too_many_frames(self, pipeline):
        with pytest.raises(ValidationError):
            pipeline.sample(request(TaskKind.UNCOND_MOTION, n_frames=65))


class TestInpainting:
    def test_prediction_keeps_known_prefix_exactly(self, pipeline, source_motion):
        result = pipeline.sample(request(TaskKind.PREDICT, motion=source_motion, seed=5))
        keep = np.array(prediction_mask(source_motion.n_frames))
        np.testing.assert_array_equal(result.motion.data[keep], source_motion.data[keep])
        assert not np.allclose(result.motion.data[~keep], source_motion.data[~keep])

    def test_inbetween_keeps_both_ends(self, pipeline, source_motion):
        result = pipeline.sample(request(TaskKind.INBETWEEN, motion=source_motion, seed=5, caption=CAPTION))
        keep = np.array(inbetween_mask(source_motion.n_frames))
        np.testing.assert_array_equal(result.motion.data[keep], source_motion.data[keep])

    def test_everything_known_returns_the_input(self, pipeline, source_motion):
        mask = [True] * source_motion.n_frames
        result = pipeline.sample(request(TaskKind.PREDICT, motion=source_motion, keep_mask=mask))
        np.testing.assert_array_equal(result.motion.data, source_motion.data)

    def test_nothing_known_is_unconditional_sampling(self, pipeline, source_motion):
        mask = [False] * source_motion.n_frames
        inpainted = pipeline.sample(request(TaskKind.PREDICT, motion=source_motion, keep_mask=mask, seed=8))
        uncond = pipeline.sample(request(TaskKind.UNCOND_MOTION, n_frames=source_motion.n_frames, seed=8))
        np.testing.assert_array_equal(inpainted.motion.data, uncond.motion.data)

    def test_schema_mismatch(self, pipeline):
        from packdit.core.motion import HUMANML3D

        other = MotionSequence(HUMANML3D, np.zeros((40, HUMANML3D.total_dim)))
        with pytest.raises(ValidationError):
            pipeline.sample(request(TaskKind.PREDICT, motion=other))


class TestTextSampling:
    def test_m2t_returns_a_caption(self, pipeline, source_motion):
        result = pipeline.sample(request(TaskKind.M2T, motion=source_motion, seed=1))
        assert isinstance(result.caption, str)
        assert result.motion is None
        again = pipeline.sample(request(TaskKind.M2T, motion=source_motion, seed=1, use_condition_cache=True))
        assert isinstance(again.caption, str)

    def test_uncond_text_is_deterministic(self, pipeline):
        first = pipeline.sample(request(TaskKind.UNCOND_TEXT, seed=6))
        second = pipeline.sample(request(TaskKind.UNCOND_TEXT, seed=6))
        assert first.caption == second.caption

    def test_joint_returns_both(self, pipeline):
        result = pipeline.sample(request(TaskKind.JOINT, seed=2, n_frames=33))
        assert result.motion.n_frames == 33
        assert isinstance(result.caption, str)


class TestTraces:
    def test_trace_has_one_entry_per_step(self, pipeline, tmp_path):
        result = pipeline.sample(request(TaskKind.UNCOND_MOTION, steps=4, trace=True, n_frames=32))
        assert [(s.t, s.t_prev) for s in result.trace][-1] == (1, 0)
        assert len(result.trace) == 4
        assert result.trace[0].t == TEST_T
        path = tmp_path / "run.pktr"
        write_trace(path, result.trace)
        loaded = read_trace(path)
        assert [s.t for s in loaded] == [s.t for s in result.trace]
        assert loaded[0].latent.shape == (32, TOY.total_dim)

    def test_joint_trace_records_both_chains(self, pipeline):
        result = pipeline.sample(request(TaskKind.JOINT, steps=3, trace=True))
        assert len(result.trace) == 6
        assert result.trace[0].latent.shape[-1] == TOY.total_dim
        assert result.trace[1].latent.shape[-1] == 4

    def test_no_trace_by_default(self, pipeline):
        assert pipeline.sample(request(TaskKind.UNCOND_TEXT)).trace == []


class TestCheckpointRoundtrip:
    def test_reloaded_pipeline_samples_identically(self, pipeline, tmp_path):
        path = tmp_path / "model.pkck"
        save_checkpoint(
            path,
            CheckpointContents(pipeline.model, pipeline.codec, pipeline.schedule, pipeline.stats, TOY),
        )
        reloaded = PackDiTPipeline.from_checkpoint(path, device="cpu")
        for req in (
            request(TaskKind.T2M, caption=CAPTION, seed=4),
            request(TaskKind.UNCOND_TEXT, seed=4),
        ):
            a, b = pipeline.sample(req), reloaded.sample(req)
            assert a.caption == b.caption
            if a.motion is not None:
                np.testing.assert_array_equal(a.motion.data, b.motion.data)
