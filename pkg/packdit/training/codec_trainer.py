"""Two-phase codec training: autoencoder first, then the projection P with the codec frozen."""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import torch
from rich.progress import Progress

from ..exceptions import ValidationError
from ..models.config import CodecConfig
from ..networks.text_codec import ProjectionModel, TextCodec
from ..utils.console import console
from ..utils.torch_utils import frozen


@dataclass
class CodecTrainingResult:
    autoencoder_accuracy: float
    projection_accuracy: float
    autoencoder_losses: List[float] = field(default_factory=list)
    projection_losses: List[float] = field(default_factory=list)


def _prefix(codec: TextCodec, projection: Optional[ProjectionModel], ids: torch.Tensor) -> torch.Tensor:
    encoded = codec.encoder(ids)
    if projection is None:
        return encoded
    return projection.unproject(projection.project(encoded))


@torch.no_grad()
def text_latents(codec: TextCodec, projection: ProjectionModel, captions: Sequence[str]) -> torch.Tensor:
    """(B, L_T, Dim_P) latent tokens the text DiT diffuses over."""
    return projection.project(codec.encode(captions))


@torch.no_grad()
def decode_latents(codec: TextCodec, projection: ProjectionModel, latents: torch.Tensor) -> List[str]:
    return codec.decode(projection.unproject(latents))


@torch.no_grad()
def reconstruction_accuracy(
    codec: TextCodec, projection: Optional[ProjectionModel], captions: Sequence[str]
) -> float:
    """Exact-match rate of caption -> encode (-> P -> P^-1) -> greedy decode."""
    if not captions:
        raise ValidationError("reconstruction accuracy of an empty caption list")
    was_training = codec.training
    codec.eval()
    ids = codec.token_ids(captions)
    decoded = codec.decode(_prefix(codec, projection, ids))
    codec.train(was_training)
    expected = [" ".join(c.lower().split()) for c in captions]
    return sum(d == e for d, e in zip(decoded, expected)) / len(captions)


def _fit(parameters, loss_fn, epochs: int, learning_rate: float, label: str) -> List[float]:
    optimizer = torch.optim.Adam(parameters, lr=learning_rate, betas=(0.9, 0.999), eps=1e-8)
    losses = []
    with Progress(console=console, transient=True) as progress:
        task = progress.add_task(f"[cyan]{label}", total=epochs)
        for _ in range(epochs):
            optimizer.zero_grad(set_to_none=True)
            loss = loss_fn()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
            progress.advance(task)
    return losses


def train_codec(
    codec: TextCodec,
    projection: ProjectionModel,
    captions: Sequence[str],
    config: Optional[CodecConfig] = None,
) -> CodecTrainingResult:
    """Train the autoencoder on the distinct captions, then P through the frozen codec."""
    if not captions:
        raise ValidationError("cannot train the text codec on an empty corpus")
    config = config or codec.config
    distinct = sorted(set(" ".join(c.lower().split()) for c in captions))
    ids = codec.token_ids(distinct)
    codec.train()

    ae_losses = _fit(
        codec.parameters(),
        lambda: codec.teacher_forcing_loss(codec.encoder(ids), ids),
        config.autoencoder_epochs,
        config.learning_rate,
        "Training text autoencoder...",
    )
    with frozen(codec):
        proj_losses = _fit(
            projection.parameters(),
            lambda: codec.teacher_forcing_loss(_prefix(codec, projection, ids), ids),
            config.projection_epochs,
            config.learning_rate,
            "Training projection...",
        )
    codec.eval()
    result = CodecTrainingResult(
        autoencoder_accuracy=reconstruction_accuracy(codec, None, distinct),
        projection_accuracy=reconstruction_accuracy(codec, projection, distinct),
        autoencoder_losses=ae_losses,
        projection_losses=proj_losses,
    )
    console.print(
        f"[green]✓ Codec exact match {result.autoencoder_accuracy:.2%}, "
        f"through P {result.projection_accuracy:.2%}[/green]"
    )
    return result
