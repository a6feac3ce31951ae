"""Runtime configuration for packdit."""

import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

from .exceptions import ConfigError

# Load environment variables
load_dotenv()


@dataclass
class Config:
    """Process-wide runtime settings."""
    # Parallelism (evaluation and dataset generation only)
    threads: Optional[int] = None
    device: str = "cpu"

    # Sampling defaults
    sample_steps: int = 50
    eta: float = 0.0

    # Output
    quiet: bool = False

    @classmethod
    def from_env(cls) -> "Config":
        """Create configuration from PACKDIT_* environment variables."""
        try:
            threads = os.getenv("PACKDIT_THREADS")
            config = cls(
                threads=int(threads) if threads else None,
                device=os.getenv("PACKDIT_DEVICE", "cpu"),
                sample_steps=int(os.getenv("PACKDIT_STEPS", "50")),
                eta=float(os.getenv("PACKDIT_ETA", "0.0")),
                quiet=os.getenv("PACKDIT_QUIET", "false").lower() == "true",
            )
        except ValueError as exc:
            raise ConfigError(f"invalid PACKDIT_* environment value: {exc}")
        if config.threads is not None and config.threads < 1:
            raise ConfigError(f"PACKDIT_THREADS must be positive, got {config.threads}")
        if config.sample_steps < 1:
            raise ConfigError(f"PACKDIT_STEPS must be positive, got {config.sample_steps}")
        if not 0.0 <= config.eta <= 1.0:
            raise ConfigError(f"PACKDIT_ETA must lie in [0, 1], got {config.eta}")
        return config

    @classmethod
    def default(cls) -> "Config":
        """Create default configuration (for testing)."""
        return cls(threads=None, device="cpu", sample_steps=50, eta=0.0, quiet=False)


# Global config instance
_config: Optional[Config] = None


def get_config() -> Config:
    """Get the global configuration instance."""
    global _config
    if _config is None:
        _config = Config.from_env()
    return _config


def set_config(config: Config) -> None:
    """Set the global configuration instance."""
    global _config
    _config = config
