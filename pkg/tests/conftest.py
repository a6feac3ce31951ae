import pytest
import torch
import yaml

from packdit.core.diffusion import build_schedule
from packdit.data.grammar import all_captions
from packdit.networks.checkpoint import build_model
from packdit.networks.text_codec import Vocab

from .helpers import TEST_T, TINY_RECIPE, perturb, small_codec_config, small_dit_config


@pytest.fixture
def toy_vocab():
    return Vocab.from_captions(all_captions())


@pytest.fixture
def small_model(toy_vocab):
    torch.manual_seed(0)
    model, codec = build_model(small_dit_config(), small_codec_config(), toy_vocab)
    perturb(model, seed=1)
    model.eval()
    codec.eval()
    return model, codec


@pytest.fixture
def linear_schedule():
    return build_schedule("linear", TEST_T)


@pytest.fixture
def tiny_recipe_file(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY_RECIPE))
    return path


@pytest.fixture(scope="session")
def toy_dataset_dir(tmp_path_factory):
    from packdit.data.dataset import generate_dataset

    out = tmp_path_factory.mktemp("toy_data")
    generate_dataset(30, seed=3, out_dir=out)
    return out
