"""PackDiT: motion and text diffusion transformers coupled by mutual attention."""

from .config import Config, get_config, set_config
from .data.dataset import generate_dataset, load_dataset
from .evaluation.evaluator import evaluate
from .exceptions import ConfigError, DataError, PackDiTError, ValidationError
from .inference.requests import SampleRequest
from .inference.sampler import PackDiTPipeline, SampleResult
from .models.config import CodecConfig, DiTConfig, RecipeConfig, StageConfig
from .models.results import MetricsReport
from .models.tasks import Coupling, StageKind, TaskKind
from .networks.dit import PackDiT
from .training.recipes import load_recipe
from .training.trainer import Trainer, run_training

__version__ = "0.1.0"
__all__ = [
    # Models
    "CodecConfig",
    "DiTConfig",
    "RecipeConfig",
    "StageConfig",
    "MetricsReport",
    "Coupling",
    "StageKind",
    "TaskKind",
    # Networks and pipelines
    "PackDiT",
    "PackDiTPipeline",
    "SampleRequest",
    "SampleResult",
    # Workflows
    "generate_dataset",
    "load_dataset",
    "load_recipe",
    "Trainer",
    "run_training",
    "evaluate",
    # Config and errors
    "Config",
    "get_config",
    "set_config",
    "PackDiTError",
    "ConfigError",
    "ValidationError",
    "DataError",
]
