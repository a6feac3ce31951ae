"""Noise schedules, forward diffusion, epsilon losses and the DDIM reverse step."""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import torch

from ..exceptions import ConfigError, ValidationError
from ..models.results import DiffusionLossTerms

Timestep = Union[int, torch.Tensor]


@dataclass(frozen=True)
class NoiseSchedule:
    """beta / alpha / alpha_bar tables for t = 1..T (index t-1)."""
    kind: str
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    cosine_s: float = 0.008
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def alpha_bar_at(self, t: int) -> float:
        """alpha_bar with the convention alpha_bar_0 = 1."""
        if t == 0:
            return 1.0
        return float(self.alpha_bar[t - 1])

    def alpha_bar_table(self) -> np.ndarray:
        """Length T+1 table indexed directly by t."""
        return np.concatenate([[1.0], self.alpha_bar])

    def params(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "T": self.T,
            "cosine_s": self.cosine_s,
            "beta_start": self.beta_start,
            "beta_end": self.beta_end,
        }


def build_schedule(
    kind: str,
    T: int,
    cosine_s: float = 0.008,
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
) -> NoiseSchedule:
    """Linear (DDPM) or cosine (improved DDPM) schedule with T steps."""
    if T < 2:
        raise ConfigError(f"a schedule needs at least 2 steps, got T={T}")
    if kind == "linear":
        beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    elif kind == "cosine":
        steps = np.arange(T + 1, dtype=np.float64)
        f = np.cos(((steps / T) + cosine_s) / (1 + cosine_s) * math.pi / 2) ** 2
        alpha_bar = f / f[0]
        beta = np.clip(1.0 - alpha_bar[1:] / alpha_bar[:-1], None, 0.999)
    else:
        raise ConfigError(f"unknown schedule kind {kind!r}; expected 'linear' or 'cosine'")
    alpha = 1.0 - beta
    return NoiseSchedule(
        kind=kind,
        T=T,
        beta=beta,
        alpha=alpha,
        alpha_bar=np.cumprod(alpha),
        cosine_s=cosine_s,
        beta_start=beta_start,
        beta_end=beta_end,
    )


def schedule_from_params(params: Dict[str, Any]) -> NoiseSchedule:
    """Rebuild a schedule from ``NoiseSchedule.params()``."""
    try:
        return build_schedule(
            params["kind"],
            int(params["T"]),
            cosine_s=float(params.get("cosine_s", 0.008)),
            beta_start=float(params.get("beta_start", 1e-4)),
            beta_end=float(params.get("beta_end", 0.02)),
        )
    except KeyError as exc:
        raise ConfigError(f"schedule parameters lack {exc}")


def _check_timestep(t: Timestep, schedule: NoiseSchedule, low: int = 1) -> None:
    if isinstance(t, torch.Tensor):
        if t.numel() == 0:
            raise ValidationError("empty timestep tensor")
        t_min, t_max = int(t.min()), int(t.max())
    else:
        t_min = t_max = int(t)
    if t_min < low or t_max > schedule.T:
        raise ValidationError(f"timestep out of range [{low}, {schedule.T}]: {t_min}..{t_max}")


def _coefficient(table: np.ndarray, t: Timestep, like: torch.Tensor) -> torch.Tensor:
    values = torch.as_tensor(table, dtype=like.dtype, device=like.device)
    if isinstance(t, torch.Tensor):
        coef = values[t.long().to(like.device)]
        return coef.view(-1, *([1] * (like.ndim - 1)))
    return values[int(t)]


def q_sample(
    x0: torch.Tensor, t: Timestep, eps: torch.Tensor, schedule: NoiseSchedule
) -> torch.Tensor:
    """sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps; per-row t when a tensor."""
    if x0.shape != eps.shape:
        raise ValidationError(f"x0 {tuple(x0.shape)} and eps {tuple(eps.shape)} differ")
    _check_timestep(t, schedule)
    if isinstance(t, torch.Tensor) and t.numel() != x0.shape[0]:
        raise ValidationError(f"{t.numel()} timesteps for a batch of {x0.shape[0]}")
    table = schedule.alpha_bar_table()
    signal = _coefficient(np.sqrt(table), t, x0)
    noise = _coefficient(np.sqrt(1.0 - table), t, x0)
    return signal * x0 + noise * eps


def epsilon_loss(
    eps_pred: torch.Tensor, eps_true: torch.Tensor, mask: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """Mean squared error over all entries (over valid tokens when a (B, N) mask is given)."""
    if eps_pred.shape != eps_true.shape:
        raise ValidationError(
            f"prediction {tuple(eps_pred.shape)} and target {tuple(eps_true.shape)} differ"
        )
    squared = (eps_pred - eps_true) ** 2
    if mask is None:
        return squared.mean()
    if mask.shape != eps_pred.shape[:2]:
        raise ValidationError(f"mask {tuple(mask.shape)} does not match tokens {tuple(eps_pred.shape)}")
    weights = mask.to(squared.dtype).unsqueeze(-1)
    count = weights.sum() * squared.shape[-1]
    if count == 0:
        raise ValidationError("mask selects no tokens")
    return (squared * weights).sum() / count


def combine_losses(loss_motion: float, loss_text: float, lam: float) -> DiffusionLossTerms:
    """total = L_M + lambda * L_T."""
    for name, value in (("loss_motion", loss_motion), ("loss_text", loss_text), ("lambda", lam)):
        if value < 0 or not math.isfinite(value):
            raise ValidationError(f"{name} must be a finite nonnegative number, got {value}")
    return DiffusionLossTerms(
        loss_motion=loss_motion, loss_text=loss_text, lam=lam, total=loss_motion + lam * loss_text
    )


def ddim_step(
    x_t: torch.Tensor,
    eps_pred: torch.Tensor,
    t: int,
    t_prev: int,
    eta: float,
    schedule: NoiseSchedule,
    noise: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """One DDIM update from t to t_prev (alpha_bar_0 = 1)."""
    if not t > t_prev >= 0:
        raise ValidationError(f"DDIM needs t > t_prev >= 0, got t={t}, t_prev={t_prev}")
    _check_timestep(t, schedule)
    if not 0.0 <= eta <= 1.0:
        raise ValidationError(f"eta must lie in [0, 1], got {eta}")
    if x_t.shape != eps_pred.shape:
        raise ValidationError("x_t and eps_pred shapes differ")
    ab_t = schedule.alpha_bar_at(t)
    ab_prev = schedule.alpha_bar_at(t_prev)
    x0_hat = (x_t - math.sqrt(1.0 - ab_t) * eps_pred) / math.sqrt(ab_t)
    sigma = eta * math.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * math.sqrt(1.0 - ab_t / ab_prev)
    direction = math.sqrt(max(1.0 - ab_prev - sigma**2, 0.0))
    out = math.sqrt(ab_prev) * x0_hat + direction * eps_pred
    if sigma > 0:
        if noise is None or noise.shape != x_t.shape:
            raise ValidationError("eta > 0 needs a noise tensor shaped like x_t")
        out = out + sigma * noise
    return out


def ddim_timesteps(T: int, steps: int) -> List[Tuple[int, int]]:
    """Evenly strided (t, t_prev) pairs from T down to 0."""
    if not 1 <= steps <= T:
        raise ConfigError(f"DDIM steps must lie in [1, {T}], got {steps}")
    ts = [int(round(v)) for v in np.linspace(T, 1, steps)]
    return list(zip(ts, ts[1:] + [0]))


def sample_timesteps(batch: int, schedule: NoiseSchedule, generator: torch.Generator) -> torch.Tensor:
    """t ~ Uniform(1..T), one per row."""
    return torch.randint(1, schedule.T + 1, (batch,), generator=generator)
