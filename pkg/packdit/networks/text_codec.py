"""Toy text codec: closed vocabulary, token-embedding encoder, prefix-conditioned decoder, projection P."""

import hashlib
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import torch
import torch.nn as nn

from ..exceptions import ValidationError
from ..models.config import CodecConfig

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")


@dataclass(frozen=True)
class Vocab:
    """Ordered token list; ids 0-3 are the special tokens."""
    tokens: Tuple[str, ...]
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tokens = tuple(self.tokens)
        if tokens[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise ValidationError("a vocabulary must start with <pad>, <bos>, <eos>, <unk>")
        if len(set(tokens)) != len(tokens):
            raise ValidationError("vocabulary tokens must be unique")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "_index", {tok: i for i, tok in enumerate(tokens)})

    @classmethod
    def from_captions(cls, captions: Iterable[str]) -> "Vocab":
        words = sorted({word for caption in captions for word in caption.lower().split()})
        return cls(SPECIAL_TOKENS + tuple(w for w in words if w not in SPECIAL_TOKENS))

    @property
    def size(self) -> int:
        return len(self.tokens)

    def id(self, word: str) -> int:
        return self._index.get(word, UNK)

    def hash(self) -> str:
        """sha256 over the ordered token list."""
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CaptionTokens:
    """BOS, word ids, EOS, then PAD up to a fixed length."""
    ids: Tuple[int, ...]

    def __post_init__(self):
        ids = tuple(int(i) for i in self.ids)
        if len(ids) < 2 or ids[0] != BOS:
            raise ValidationError("caption tokens must begin with BOS")
        try:
            end = ids.index(EOS)
        except ValueError:
            raise ValidationError("caption tokens must contain EOS")
        if any(i != PAD for i in ids[end + 1 :]) or PAD in ids[:end]:
            raise ValidationError("PAD may only appear after EOS")
        object.__setattr__(self, "ids", ids)

    @property
    def n_words(self) -> int:
        return self.ids.index(EOS) - 1


def tokenize(caption: str, vocab: Vocab, max_tokens: int = 16) -> CaptionTokens:
    """Lowercase whitespace split; unknown words become UNK; padded to ``max_tokens``."""
    words = caption.lower().split()
    if len(words) > max_tokens - 2:
        raise ValidationError(
            f"caption has {len(words)} words, at most {max_tokens - 2} fit in {max_tokens} tokens"
        )
    ids = [BOS] + [vocab.id(w) for w in words] + [EOS]
    return CaptionTokens(tuple(ids + [PAD] * (max_tokens - len(ids))))


def detokenize(tokens: Sequence[int], vocab: Vocab) -> str:
    """Words up to the first EOS; BOS/PAD are skipped, UNK is kept as <unk>."""
    words = []
    for i in tokens:
        i = int(i)
        if i == EOS:
            break
        if i in (BOS, PAD):
            continue
        words.append(vocab.tokens[i] if 0 <= i < vocab.size else SPECIAL_TOKENS[UNK])
    return " ".join(words)


def prefix_lm_mask(prefix_len: int, token_len: int) -> torch.Tensor:
    """(S, S) boolean mask, True where attention is blocked.

    Prefix positions see the whole prefix; token positions see the prefix and earlier tokens.
    """
    size = prefix_len + token_len
    blocked = torch.ones(size, size, dtype=torch.bool)
    blocked[:, :prefix_len] = False
    causal = torch.triu(torch.ones(token_len, token_len, dtype=torch.bool), diagonal=1)
    blocked[prefix_len:, prefix_len:] = causal
    return blocked


def _encoder_stack(config: CodecConfig) -> nn.TransformerEncoder:
    layer = nn.TransformerEncoderLayer(
        d_model=config.embed_dim,
        nhead=config.heads,
        dim_feedforward=4 * config.embed_dim,
        dropout=0.0,
        batch_first=True,
        norm_first=True,
    )
    return nn.TransformerEncoder(layer, config.layers, enable_nested_tensor=False)


class TextEncoder(nn.Module):
    """Token embedding + learned positions + bidirectional attention; (B, L_T) -> (B, L_T, E)."""

    def __init__(self, vocab_size: int, config: CodecConfig):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, config.embed_dim, padding_idx=PAD)
        self.positions = nn.Parameter(torch.zeros(config.latent_tokens, config.embed_dim))
        nn.init.normal_(self.positions, std=0.02)
        self.layers = _encoder_stack(config)
        self.norm = nn.LayerNorm(config.embed_dim)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        h = self.embedding(ids) + self.positions[: ids.shape[1]]
        return self.norm(self.layers(h))


class TextDecoder(nn.Module):
    """Autoregressive decoder reading L_T prefix vectors before its own tokens."""

    def __init__(self, vocab_size: int, config: CodecConfig):
        super().__init__()
        self.prefix_len = config.latent_tokens
        self.max_len = config.latent_tokens
        self.embedding = nn.Embedding(vocab_size, config.embed_dim, padding_idx=PAD)
        self.positions = nn.Parameter(torch.zeros(self.prefix_len + self.max_len, config.embed_dim))
        nn.init.normal_(self.positions, std=0.02)
        self.layers = _encoder_stack(config)
        self.norm = nn.LayerNorm(config.embed_dim)
        self.lm_head = nn.Linear(config.embed_dim, vocab_size)

    def forward(self, prefix: torch.Tensor, ids: torch.Tensor) -> torch.Tensor:
        """Next-token logits (B, N, V) for every input token position."""
        if prefix.shape[1] != self.prefix_len:
            raise ValidationError(f"decoder prefix must have {self.prefix_len} tokens, got {prefix.shape[1]}")
        h = torch.cat([prefix, self.embedding(ids)], dim=1)
        h = h + self.positions[: h.shape[1]]
        mask = prefix_lm_mask(self.prefix_len, ids.shape[1]).to(h.device)
        h = self.norm(self.layers(h, mask=mask))
        return self.lm_head(h[:, self.prefix_len :])

    @torch.no_grad()
    def greedy(self, prefix: torch.Tensor, max_len: Optional[int] = None) -> List[List[int]]:
        """Greedy decoding from BOS; stops at EOS or ``max_len`` tokens."""
        max_len = min(max_len or self.max_len, self.max_len)
        ids = torch.full((prefix.shape[0], 1), BOS, dtype=torch.long, device=prefix.device)
        finished = torch.zeros(prefix.shape[0], dtype=torch.bool, device=prefix.device)
        while ids.shape[1] < max_len and not bool(finished.all()):
            next_ids = self.forward(prefix, ids)[:, -1].argmax(dim=-1)
            next_ids = torch.where(finished, torch.full_like(next_ids, PAD), next_ids)
            finished |= next_ids == EOS
            ids = torch.cat([ids, next_ids[:, None]], dim=1)
        return ids.tolist()


class ProjectionModel(nn.Module):
    """P: encoder tokens (E) <-> text latent tokens (Dim_P)."""

    def __init__(self, embed_dim: int, dim_p: int):
        super().__init__()
        self.embed_dim = embed_dim
        self.dim_p = dim_p
        self.down = nn.Sequential(nn.Linear(embed_dim, dim_p), nn.Tanh())
        self.up = nn.Sequential(nn.Linear(dim_p, embed_dim), nn.GELU(), nn.Linear(embed_dim, embed_dim))

    def project(self, encoder_tokens: torch.Tensor) -> torch.Tensor:
        if encoder_tokens.shape[-1] != self.embed_dim:
            raise ValidationError(
                f"encoder tokens have dim {encoder_tokens.shape[-1]}, projection expects {self.embed_dim}"
            )
        return self.down(encoder_tokens)

    def unproject(self, latent_tokens: torch.Tensor) -> torch.Tensor:
        if latent_tokens.shape[-1] != self.dim_p:
            raise ValidationError(
                f"latent tokens have dim {latent_tokens.shape[-1]}, projection expects {self.dim_p}"
            )
        return self.up(latent_tokens)


class TextCodec(nn.Module):
    """Vocabulary plus encoder/decoder pair."""

    def __init__(self, vocab: Vocab, config: CodecConfig):
        super().__init__()
        self.vocab = vocab
        self.config = config
        self.encoder = TextEncoder(vocab.size, config)
        self.decoder = TextDecoder(vocab.size, config)

    def token_ids(self, captions: Sequence[str]) -> torch.Tensor:
        """(B, L_T) padded id matrix."""
        rows = [tokenize(c, self.vocab, self.config.latent_tokens).ids for c in captions]
        return torch.tensor(rows, dtype=torch.long)

    def encode(self, captions: Sequence[str]) -> torch.Tensor:
        return self.encoder(self.token_ids(captions).to(self.encoder.positions.device))

    def decode(self, prefix: torch.Tensor, max_len: Optional[int] = None) -> List[str]:
        return [detokenize(ids, self.vocab) for ids in self.decoder.greedy(prefix, max_len)]

    def teacher_forcing_loss(self, prefix: torch.Tensor, ids: torch.Tensor) -> torch.Tensor:
        """Cross-entropy of next-token prediction, PAD targets ignored."""
        logits = self.decoder(prefix, ids[:, :-1])
        return nn.functional.cross_entropy(
            logits.reshape(-1, logits.shape[-1]), ids[:, 1:].reshape(-1), ignore_index=PAD
        )
