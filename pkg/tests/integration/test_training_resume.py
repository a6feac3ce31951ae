import pytest
import yaml

from packdit.data.dataset import load_dataset
from packdit.exceptions import ConfigError
from packdit.training.recipes import load_recipe
from packdit.training.trainer import LOSS_LOG_NAME, STATE_NAME, Trainer, read_loss_log

from tests.helpers import JOINT_RECIPE


@pytest.fixture
def recipe(tiny_recipe_file):
    return load_recipe("desk", tiny_recipe_file)


@pytest.fixture
def dataset(toy_dataset_dir):
    return load_dataset(toy_dataset_dir)


class TestTrainer:
    def test_full_run_writes_every_stage(self, recipe, dataset, tmp_path):
        state = Trainer(recipe, dataset, tmp_path, seed=0).run()
        assert state.finished
        assert state.step == 9
        for label in ("uncond", "mixed", "t2m"):
            assert (tmp_path / f"{label}.pkck").exists()
            assert len(state.losses(label)) == 3
        records = read_loss_log(tmp_path / LOSS_LOG_NAME)
        assert [r.step for r in records] == list(range(1, 10))
        assert {r.task for r in records if r.stage == "t2m"} == {"t2m"}
        assert {r.task for r in records if r.stage == "uncond"} == {"uncond"}

    def test_interrupted_run_resumes_bit_identically(self, recipe, dataset, tmp_path):
        straight = Trainer(recipe, dataset, tmp_path / "straight", seed=1).run()

        partial = Trainer(recipe, dataset, tmp_path / "resumed", seed=1).run(max_total_steps=4)
        assert not partial.finished
        assert partial.step == 4
        assert (tmp_path / "resumed" / STATE_NAME).exists()
        resumed = Trainer(recipe, dataset, tmp_path / "resumed", seed=1).run(resume=True)

        assert resumed.finished
        assert resumed.history == straight.history
        assert (tmp_path / "resumed" / LOSS_LOG_NAME).read_text() == (tmp_path / "straight" / LOSS_LOG_NAME).read_text()
        assert (tmp_path / "resumed" / "t2m.pkck").read_bytes() == (tmp_path / "straight" / "t2m.pkck").read_bytes()

    def test_single_stage_starts_from_previous_checkpoint(self, recipe, dataset, tmp_path):
        Trainer(recipe, dataset, tmp_path, seed=0).run(only_stage="uncond")
        state = Trainer(recipe, dataset, tmp_path, seed=0).run(only_stage="mixed")
        assert state.finished
        assert set(state.checkpoints) == {"mixed"}

    def test_joint_stage(self, dataset, tmp_path):
        path = tmp_path / "joint.yaml"
        path.write_text(yaml.safe_dump(JOINT_RECIPE))
        recipe = load_recipe("desk", path)
        state = Trainer(recipe, dataset, tmp_path / "run", seed=0).run()
        assert state.finished
        assert (tmp_path / "run" / "joint.pkck").exists()
        records = [r for r in read_loss_log(tmp_path / "run" / LOSS_LOG_NAME) if r.stage == "joint"]
        assert len(records) == 3
        for record in records:
            assert record.task == "joint"
            assert record.loss_motion > 0 and record.loss_text > 0

    def test_joint_stage_alone_starts_from_uncond(self, dataset, tmp_path):
        path = tmp_path / "joint.yaml"
        path.write_text(yaml.safe_dump(JOINT_RECIPE))
        recipe = load_recipe("desk", path)
        Trainer(recipe, dataset, tmp_path / "run", seed=0).run(only_stage="uncond")
        state = Trainer(recipe, dataset, tmp_path / "run", seed=0).run(only_stage="joint")
        assert set(state.checkpoints) == {"joint"}
        assert len(state.losses("joint")) == 3

    def test_stage_missing_from_recipe(self, recipe, dataset, tmp_path):
        with pytest.raises(ConfigError):
            Trainer(recipe, dataset, tmp_path).run(only_stage="m2t")

    def test_state_belongs_to_its_seed(self, recipe, dataset, tmp_path):
        Trainer(recipe, dataset, tmp_path, seed=0).run(max_total_steps=2)
        with pytest.raises(ConfigError):
            Trainer(recipe, dataset, tmp_path, seed=5).run(resume=True)
