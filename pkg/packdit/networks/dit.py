"""Two DiT stacks (motion, text) coupled per block by residual mutual cross-attention."""

import math
from typing import List, Optional, Sequence, Tuple, Union

import torch
import torch.nn as nn
from timm.models.vision_transformer import Mlp

from ..exceptions import ValidationError
from ..models.config import DiTConfig
from ..models.tasks import Coupling

Timesteps = Union[int, torch.Tensor]


def modulate(x: torch.Tensor, shift: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return x * (1 + scale.unsqueeze(1)) + shift.unsqueeze(1)


def sinusoidal_positions(n_positions: int, dim: int) -> torch.Tensor:
    """Fixed (n_positions, dim) sin/cos table."""
    position = torch.arange(n_positions, dtype=torch.float64).unsqueeze(1)
    div_term = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
    table = torch.zeros(n_positions, dim, dtype=torch.float64)
    table[:, 0::2] = torch.sin(position * div_term)
    table[:, 1::2] = torch.cos(position * div_term[: dim // 2])
    return table.float()


class TimestepEmbedder(nn.Module):
    """
    Embeds scalar timesteps into vector representations.
    """

    def __init__(self, hidden_size: int, frequency_embedding_size: int = 256):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(frequency_embedding_size, hidden_size, bias=True),
            nn.SiLU(),
            nn.Linear(hidden_size, hidden_size, bias=True),
        )
        self.frequency_embedding_size = frequency_embedding_size

    @staticmethod
    def timestep_embedding(t: torch.Tensor, dim: int, max_period: int = 10000) -> torch.Tensor:
        """(N,) timesteps -> (N, dim) cos/sin features (float64)."""
        half = dim // 2
        freqs = torch.exp(
            -math.log(max_period) * torch.arange(start=0, end=half, dtype=torch.float64) / half
        ).to(device=t.device)
        args = t[:, None].to(torch.float64) * freqs[None]
        embedding = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
        if dim % 2:
            embedding = torch.cat([embedding, torch.zeros_like(embedding[:, :1])], dim=-1)
        return embedding

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        t_freq = self.timestep_embedding(t, self.frequency_embedding_size)
        return self.mlp(t_freq.to(self.mlp[0].weight.dtype))


class Attention(nn.Module):
    """Multi-head scaled dot-product attention with inspectable weights.

    Queries come from ``x``; keys and values from ``context`` (``x`` itself for
    self-attention). ``key_mask`` is (B, N_k) with True on valid keys.
    """

    def __init__(self, width: int, heads: int, zero_output: bool = False):
        super().__init__()
        if width % heads:
            raise ValidationError(f"width {width} is not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = width // heads
        self.q = nn.Linear(width, width)
        self.kv = nn.Linear(width, 2 * width)
        self.proj = nn.Linear(width, width)
        if zero_output:
            nn.init.zeros_(self.proj.weight)
            nn.init.zeros_(self.proj.bias)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        B, N, _ = x.shape
        return x.view(B, N, self.heads, self.head_dim).transpose(1, 2)

    def weights(
        self, x: torch.Tensor, context: torch.Tensor, key_mask: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        """Softmax(q k^T / sqrt(d_k)) of shape (B, heads, N_q, N_k)."""
        q = self._split(self.q(x))
        k, _ = self.kv(context).chunk(2, dim=-1)
        k = self._split(k)
        logits = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if key_mask is not None:
            blocked = ~key_mask.bool()[:, None, None, :]
            logits = logits.masked_fill(blocked, torch.finfo(logits.dtype).min)
        return logits.softmax(dim=-1)

    def forward(
        self,
        x: torch.Tensor,
        context: Optional[torch.Tensor] = None,
        key_mask: Optional[torch.Tensor] = None,
        return_weights: bool = False,
    ):
        context = x if context is None else context
        attn = self.weights(x, context, key_mask)
        _, v = self.kv(context).chunk(2, dim=-1)
        out = attn @ self._split(v)
        B, _, N, _ = out.shape
        out = self.proj(out.transpose(1, 2).reshape(B, N, -1))
        if return_weights:
            return out, attn
        return out


class MutualAttention(nn.Module):
    """One side of a mutual block: this stream's queries read the other stream.

    Both inputs pass through an affine-free LayerNorm; the output projection starts
    at zero so an untrained block adds nothing to the residual stream.
    """

    def __init__(self, width: int, heads: int):
        super().__init__()
        self.norm_query = nn.LayerNorm(width, elementwise_affine=False, eps=1e-6)
        self.norm_context = nn.LayerNorm(width, elementwise_affine=False, eps=1e-6)
        self.attn = Attention(width, heads, zero_output=True)

    def forward(
        self, x: torch.Tensor, other: torch.Tensor, other_mask: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        return self.attn(self.norm_query(x), self.norm_context(other), key_mask=other_mask)


class DiTBlock(nn.Module):
    """
    adaLN-Zero DiT block: self-attention, mutual cross-attention, feed-forward.
    """

    def __init__(self, width: int, heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(width, elementwise_affine=False, eps=1e-6)
        self.attn = Attention(width, heads)
        self.mutual = MutualAttention(width, heads)
        self.norm2 = nn.LayerNorm(width, elementwise_affine=False, eps=1e-6)
        approx_gelu = lambda: nn.GELU(approximate="tanh")  # noqa: E731
        self.mlp = Mlp(
            in_features=width, hidden_features=int(width * mlp_ratio), act_layer=approx_gelu, drop=0
        )
        self.adaLN_modulation = nn.Sequential(nn.SiLU(), nn.Linear(width, 6 * width, bias=True))
        nn.init.zeros_(self.adaLN_modulation[-1].weight)
        nn.init.zeros_(self.adaLN_modulation[-1].bias)

    def modulation(self, c: torch.Tensor) -> Tuple[torch.Tensor, ...]:
        """shift/scale/gate for attention, then for the MLP."""
        return self.adaLN_modulation(c).chunk(6, dim=1)

    def self_attend(
        self, x: torch.Tensor, mod: Sequence[torch.Tensor], mask: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        shift_msa, scale_msa, gate_msa = mod[:3]
        return x + gate_msa.unsqueeze(1) * self.attn(
            modulate(self.norm1(x), shift_msa, scale_msa), key_mask=mask
        )

    def cross_attend(
        self, x: torch.Tensor, other: torch.Tensor, other_mask: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        return x + self.mutual(x, other, other_mask)

    def feed_forward(self, x: torch.Tensor, mod: Sequence[torch.Tensor]) -> torch.Tensor:
        shift_mlp, scale_mlp, gate_mlp = mod[3:]
        return x + gate_mlp.unsqueeze(1) * self.mlp(modulate(self.norm2(x), shift_mlp, scale_mlp))


class FinalLayer(nn.Module):
    """
    The final layer of DiT: adaLN then a zero-initialized linear head.
    """

    def __init__(self, width: int, out_dim: int):
        super().__init__()
        self.norm_final = nn.LayerNorm(width, elementwise_affine=False, eps=1e-6)
        self.linear = nn.Linear(width, out_dim, bias=True)
        self.adaLN_modulation = nn.Sequential(nn.SiLU(), nn.Linear(width, 2 * width, bias=True))
        for layer in (self.linear, self.adaLN_modulation[-1]):
            nn.init.zeros_(layer.weight)
            nn.init.zeros_(layer.bias)

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        shift, scale = self.adaLN_modulation(c).chunk(2, dim=1)
        return self.linear(modulate(self.norm_final(x), shift, scale))


class DiTStack(nn.Module):
    """One modality's denoiser over a token sequence."""

    def __init__(self, token_dim: int, max_tokens: int, config: DiTConfig):
        super().__init__()
        self.token_dim = token_dim
        self.max_tokens = max_tokens
        self.x_embedder = nn.Linear(token_dim, config.width)
        self.register_buffer(
            "pos_embed", sinusoidal_positions(max_tokens, config.width), persistent=False
        )
        self.t_embedder = TimestepEmbedder(config.width, config.frequency_embedding_size)
        self.blocks = nn.ModuleList(
            [DiTBlock(config.width, config.heads, config.mlp_ratio) for _ in range(config.depth)]
        )
        self.final_layer = FinalLayer(config.width, token_dim)
        nn.init.normal_(self.t_embedder.mlp[0].weight, std=0.02)
        nn.init.normal_(self.t_embedder.mlp[2].weight, std=0.02)

    def embed(self, tokens: torch.Tensor, t: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Token states and timestep conditioning vector."""
        h = self.x_embedder(tokens) + self.pos_embed[: tokens.shape[1]].to(tokens.dtype)
        return h, self.t_embedder(t)

    def head(self, h: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        return self.final_layer(h, c)


class _Side:
    """Per-forward working state of one stack."""

    def __init__(self, stack: DiTStack, tokens: torch.Tensor, t: torch.Tensor, mask):
        self.stack = stack
        self.mask = mask
        self.h, self.c = stack.embed(tokens, t)
        self.mods: List[Tuple[torch.Tensor, ...]] = []


class PackDiT(nn.Module):
    """Motion DiT and text DiT with per-block mutual attention, plus the text projection P."""

    def __init__(self, config: DiTConfig, projection: Optional[nn.Module] = None):
        super().__init__()
        self.config = config
        self.motion_dit = DiTStack(config.motion_token_dim, config.max_motion_tokens, config)
        self.text_dit = DiTStack(config.text_latent_dim, config.max_text_tokens, config)
        self.projection = projection
        self.mutual_enabled = True

    def stack(self, side: str) -> DiTStack:
        if side == "motion":
            return self.motion_dit
        if side == "text":
            return self.text_dit
        raise ValidationError(f"unknown side {side!r}; expected 'motion' or 'text'")

    def diffusion_parameters(self) -> List[nn.Parameter]:
        """Parameters of both DiT stacks (mutual sublayers included), without P."""
        return list(self.motion_dit.parameters()) + list(self.text_dit.parameters())

    def _timesteps(self, t: Timesteps, batch: int, like: torch.Tensor) -> torch.Tensor:
        if isinstance(t, torch.Tensor):
            t = t.reshape(-1)
            if t.numel() == 1:
                t = t.expand(batch)
            if t.numel() != batch:
                raise ValidationError(f"{t.numel()} timesteps for a batch of {batch}")
        else:
            t = torch.full((batch,), int(t))
        t = t.to(like.device)
        if t.numel() and (int(t.min()) < 0 or int(t.max()) > self.config.diffusion_steps):
            raise ValidationError(
                f"timesteps must lie in [0, {self.config.diffusion_steps}], "
                f"got {int(t.min())}..{int(t.max())}"
            )
        return t

    def _check_tokens(self, stack: DiTStack, tokens: torch.Tensor, side: str) -> None:
        if tokens.ndim != 3 or tokens.shape[-1] != stack.token_dim:
            raise ValidationError(
                f"{side} tokens must be (B, N, {stack.token_dim}), got {tuple(tokens.shape)}"
            )
        if tokens.shape[1] == 0:
            raise ValidationError(f"{side} tokens are empty")
        if tokens.shape[1] > stack.max_tokens:
            raise ValidationError(
                f"{tokens.shape[1]} {side} tokens exceed the maximum of {stack.max_tokens}"
            )

    def _resolve_coupling(self, mutual_enabled: Optional[bool], coupling: Optional[Coupling]) -> Coupling:
        if coupling is not None:
            return Coupling(coupling)
        enabled = self.mutual_enabled if mutual_enabled is None else mutual_enabled
        return Coupling.MUTUAL if enabled else Coupling.NONE

    def forward_pair(
        self,
        motion_tokens: Optional[torch.Tensor],
        t_motion: Optional[Timesteps],
        text_tokens: Optional[torch.Tensor],
        t_text: Optional[Timesteps],
        mutual_enabled: Optional[bool] = None,
        coupling: Optional[Coupling] = None,
        motion_mask: Optional[torch.Tensor] = None,
        text_mask: Optional[torch.Tensor] = None,
        motion_context: Optional[Sequence[torch.Tensor]] = None,
        text_context: Optional[Sequence[torch.Tensor]] = None,
    ) -> Tuple[Optional[torch.Tensor], Optional[torch.Tensor]]:
        """Predict epsilon for whichever sides are given.

        Each block runs self-attention on every present side, then the mutual
        sublayers (both reading the post-self-attention, pre-mutual states), then
        the feed-forward. ``motion_context`` / ``text_context`` stand in for an
        absent side with per-block states from ``condition_states``; the masks
        apply to a side's tokens whether they are live or cached.
        """
        coupling = self._resolve_coupling(mutual_enabled, coupling)
        if motion_tokens is None and text_tokens is None:
            raise ValidationError("forward_pair needs motion tokens, text tokens or both")
        sides = {}
        if motion_tokens is not None:
            self._check_tokens(self.motion_dit, motion_tokens, "motion")
            t = self._timesteps(t_motion, motion_tokens.shape[0], motion_tokens)
            sides["motion"] = _Side(self.motion_dit, motion_tokens, t, motion_mask)
        if text_tokens is not None:
            self._check_tokens(self.text_dit, text_tokens, "text")
            t = self._timesteps(t_text, text_tokens.shape[0], text_tokens)
            sides["text"] = _Side(self.text_dit, text_tokens, t, text_mask)
        if len(sides) == 2 and motion_tokens.shape[0] != text_tokens.shape[0]:
            raise ValidationError("motion and text batches differ in size")

        contexts = {"motion": motion_context, "text": text_context}
        masks = {"motion": motion_mask, "text": text_mask}
        reads = {
            "motion": coupling in (Coupling.MUTUAL, Coupling.MOTION_READS_TEXT),
            "text": coupling in (Coupling.MUTUAL, Coupling.TEXT_READS_MOTION),
        }
        for side in sides.values():
            side.mods = [block.modulation(side.c) for block in side.stack.blocks]

        for b in range(self.config.depth):
            for side in sides.values():
                side.h = side.stack.blocks[b].self_attend(side.h, side.mods[b], side.mask)
            attended = {}
            for name, side in sides.items():
                other_name = "text" if name == "motion" else "motion"
                if not reads[name]:
                    continue
                if other_name in sides:
                    other = sides[other_name].h
                elif contexts[other_name] is not None:
                    other = contexts[other_name][b]
                else:
                    continue
                attended[name] = side.stack.blocks[b].cross_attend(side.h, other, masks[other_name])
            for name, h in attended.items():
                sides[name].h = h
            for side in sides.values():
                side.h = side.stack.blocks[b].feed_forward(side.h, side.mods[b])

        motion_out = sides["motion"].stack.head(sides["motion"].h, sides["motion"].c) if "motion" in sides else None
        text_out = sides["text"].stack.head(sides["text"].h, sides["text"].c) if "text" in sides else None
        return motion_out, text_out

    def forward(self, motion_tokens, t_motion, text_tokens, t_text, **kwargs):
        return self.forward_pair(motion_tokens, t_motion, text_tokens, t_text, **kwargs)

    def mutual_attend(
        self,
        motion_states: torch.Tensor,
        text_states: torch.Tensor,
        block_index: int,
        motion_mask: Optional[torch.Tensor] = None,
        text_mask: Optional[torch.Tensor] = None,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """Residual mutual attention of one block; both updates read the inputs as given."""
        if motion_states.shape[1] == 0 or text_states.shape[1] == 0:
            raise ValidationError("mutual attention needs non-empty motion and text states")
        if not 0 <= block_index < self.config.depth:
            raise ValidationError(f"block index {block_index} outside [0, {self.config.depth})")
        motion_out = self.motion_dit.blocks[block_index].cross_attend(motion_states, text_states, text_mask)
        text_out = self.text_dit.blocks[block_index].cross_attend(text_states, motion_states, motion_mask)
        return motion_out, text_out

    def condition_states(
        self, side: str, tokens: torch.Tensor, mask: Optional[torch.Tensor] = None
    ) -> List[torch.Tensor]:
        """Per-block states of a clean condition at t=0 that the other side reads.

        The condition stack reads nothing, so the states do not depend on the
        generating side and can be computed once per sample.
        """
        stack = self.stack(side)
        self._check_tokens(stack, tokens, side)
        t = torch.zeros(tokens.shape[0], dtype=torch.long, device=tokens.device)
        h, c = stack.embed(tokens, t)
        states = []
        for block in stack.blocks:
            mod = block.modulation(c)
            h = block.self_attend(h, mod, mask)
            states.append(h)
            h = block.feed_forward(h, mod)
        return states
