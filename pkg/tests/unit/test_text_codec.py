import pytest
import torch

from packdit.data.grammar import all_captions
from packdit.exceptions import ValidationError
from packdit.networks.text_codec import (
    BOS,
    EOS,
    PAD,
    SPECIAL_TOKENS,
    UNK,
    CaptionTokens,
    ProjectionModel,
    TextCodec,
    Vocab,
    detokenize,
    prefix_lm_mask,
    tokenize,
)
from packdit.training.codec_trainer import decode_latents, text_latents, train_codec

from tests.helpers import small_codec_config


class TestVocab:
    def setup_method(self):
        self.vocab = Vocab.from_captions(all_captions())

    def test_specials_come_first(self):
        assert self.vocab.tokens[:4] == SPECIAL_TOKENS
        assert self.vocab.id("<pad>") == PAD

    def test_words_are_sorted_and_unique(self):
        words = self.vocab.tokens[4:]
        assert list(words) == sorted(set(words))
        assert "counterclockwise" in words

    def test_unknown_word(self):
        assert self.vocab.id("teleports") == UNK

    def test_hash_depends_on_order(self):
        same = Vocab.from_captions(reversed(all_captions()))
        assert same.hash() == self.vocab.hash()
        other = Vocab(SPECIAL_TOKENS + ("b", "a"))
        assert other.hash() != Vocab(SPECIAL_TOKENS + ("a", "b")).hash()

    def test_rejects_bad_vocabularies(self):
        with pytest.raises(ValidationError):
            Vocab(("a", "b"))
        with pytest.raises(ValidationError):
            Vocab(SPECIAL_TOKENS + ("a", "a"))


class TestTokenization:
    def setup_method(self):
        self.vocab = Vocab.from_captions(all_captions())

    def test_layout(self):
        tokens = tokenize("A point moves  LEFT slowly", self.vocab, 10)
        assert len(tokens.ids) == 10
        assert tokens.ids[0] == BOS
        assert tokens.ids[6] == EOS
        assert tokens.ids[7:] == (PAD,) * 3
        assert tokens.n_words == 5

    def test_roundtrip_normalizes_case_and_spacing(self):
        tokens = tokenize("A point moves  LEFT slowly", self.vocab, 10)
        assert detokenize(tokens.ids, self.vocab) == "a point moves left slowly"

    def test_unknown_words_survive_as_unk(self):
        tokens = tokenize("a point teleports", self.vocab, 10)
        assert detokenize(tokens.ids, self.vocab) == "a point <unk>"

    def test_too_long(self):
        with pytest.raises(ValidationError):
            tokenize("a point moves in a circle counterclockwise quickly", self.vocab, 9)

    def test_detokenize_stops_at_eos(self):
        ids = [BOS, self.vocab.id("a"), EOS, self.vocab.id("point")]
        assert detokenize(ids, self.vocab) == "a"

    def test_caption_tokens_invariants(self):
        with pytest.raises(ValidationError):
            CaptionTokens((5, EOS))
        with pytest.raises(ValidationError):
            CaptionTokens((BOS, 5, 6))
        with pytest.raises(ValidationError):
            CaptionTokens((BOS, EOS, 5))


class TestPrefixMask:
    def test_shape_and_pattern(self):
        blocked = prefix_lm_mask(3, 4)
        assert blocked.shape == (7, 7)
        assert not blocked[:, :3].any()
        assert blocked[:3, 3:].all()
        assert not blocked[5, 3:6].any()
        assert blocked[5, 6]


class TestCodecModules:
    def setup_method(self):
        torch.manual_seed(0)
        self.config = small_codec_config()
        self.codec = TextCodec(Vocab.from_captions(all_captions()), self.config)
        self.projection = ProjectionModel(self.config.embed_dim, self.config.dim_p)
        self.codec.eval()

    def test_encoder_shape(self):
        encoded = self.codec.encode(["a point stays still", "a point moves up quickly"])
        assert encoded.shape == (2, self.config.latent_tokens, self.config.embed_dim)

    def test_projection_shapes_and_errors(self):
        latents = text_latents(self.codec, self.projection, ["a point stays still"])
        assert latents.shape == (1, self.config.latent_tokens, self.config.dim_p)
        assert latents.abs().max() <= 1.0
        assert self.projection.unproject(latents).shape[-1] == self.config.embed_dim
        with pytest.raises(ValidationError):
            self.projection.project(torch.zeros(1, 2, self.config.embed_dim + 1))
        with pytest.raises(ValidationError):
            self.projection.unproject(torch.zeros(1, 2, self.config.dim_p + 1))

    def test_decoder_is_causal_over_tokens(self):
        prefix = torch.randn(1, self.config.latent_tokens, self.config.embed_dim)
        ids = torch.tensor([[BOS, 5, 6, 7]])
        changed = torch.tensor([[BOS, 5, 6, 9]])
        with torch.no_grad():
            a = self.codec.decoder(prefix, ids)
            b = self.codec.decoder(prefix, changed)
        torch.testing.assert_close(a[:, :3], b[:, :3], atol=1e-5, rtol=1e-5)

    def test_decoder_prefix_length(self):
        with pytest.raises(ValidationError):
            self.codec.decoder(torch.zeros(1, 3, self.config.embed_dim), torch.tensor([[BOS]]))

    def test_greedy_decoding_is_bounded(self):
        latents = torch.zeros(2, self.config.latent_tokens, self.config.dim_p)
        captions = decode_latents(self.codec, self.projection, latents)
        assert len(captions) == 2
        assert all(len(c.split()) <= self.config.latent_tokens - 1 for c in captions)


class TestCodecTraining:
    def test_losses_decrease(self):
        torch.manual_seed(0)
        config = small_codec_config(embed_dim=16, autoencoder_epochs=60, projection_epochs=30)
        codec = TextCodec(Vocab.from_captions(all_captions()), config)
        projection = ProjectionModel(config.embed_dim, config.dim_p)
        result = train_codec(codec, projection, all_captions())
        assert len(result.autoencoder_losses) == 60
        assert len(result.projection_losses) == 30
        assert result.autoencoder_losses[-1] < result.autoencoder_losses[0]
        assert result.projection_losses[-1] < result.projection_losses[0]
        assert 0.0 <= result.projection_accuracy <= 1.0
        assert not codec.training

    def test_codec_is_frozen_while_projection_trains(self):
        torch.manual_seed(0)
        config = small_codec_config(autoencoder_epochs=0, projection_epochs=5)
        codec = TextCodec(Vocab.from_captions(all_captions()), config)
        before = {k: v.clone() for k, v in codec.state_dict().items()}
        train_codec(codec, ProjectionModel(config.embed_dim, config.dim_p), all_captions())
        for key, value in codec.state_dict().items():
            torch.testing.assert_close(value, before[key], rtol=0, atol=0)
        assert all(p.requires_grad for p in codec.parameters())

    def test_empty_corpus(self):
        config = small_codec_config()
        codec = TextCodec(Vocab.from_captions(all_captions()), config)
        with pytest.raises(ValidationError):
            train_codec(codec, ProjectionModel(config.embed_dim, config.dim_p), [])
