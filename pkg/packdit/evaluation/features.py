"""Deterministic toy feature extractor standing in for learned motion encoders."""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core.motion import MotionSequence
from ..data.oracle import lateral_reversals, turning_rate
from ..exceptions import ValidationError

EXTRACTOR_ID = "toy-v1"
FEATURE_DIM = 16
LOW_BAND = 1.0 / 16


@dataclass(frozen=True)
class FeatureSet:
    """n x d features from one extractor; ``source`` is "real" or "generated"."""
    features: np.ndarray
    source: str
    extractor_id: str

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def _band_energy(velocity: np.ndarray):
    centered = velocity - velocity.mean(axis=0)
    spectrum = np.abs(np.fft.rfft(centered, axis=0)) ** 2
    freqs = np.fft.rfftfreq(velocity.shape[0])
    total = spectrum.sum(axis=1) / velocity.shape[0]
    return float(total[(freqs > 0) & (freqs <= LOW_BAND)].sum()), float(total[freqs > LOW_BAND].sum())


def raw_features(seq: MotionSequence) -> np.ndarray:
    """16 summary statistics of one toy sequence (before z-scoring)."""
    if seq.schema.name != "toy":
        raise ValidationError(f"the toy extractor reads the toy schema, got {seq.schema.name!r}")
    position = seq.field("position_xy")
    velocity = seq.field("velocity_xy")
    speed = np.linalg.norm(velocity, axis=1)
    net = velocity.sum(axis=0)
    kappa = turning_rate(velocity) if speed.mean() > 0 else 0.0
    low, high = _band_energy(velocity)
    return np.array(
        [
            net[0],
            net[1],
            speed.mean(),
            speed.std(),
            velocity[:, 0].mean(),
            velocity[:, 1].mean(),
            velocity[:, 0].std(),
            velocity[:, 1].std(),
            kappa,
            np.sign(kappa),
            lateral_reversals(velocity) / seq.n_frames if speed.mean() > 0 else 0.0,
            position[:, 0].std(),
            position[:, 1].std(),
            speed.sum(),
            low,
            high,
        ]
    )


class ToyFeatureExtractor:
    """Raw statistics z-scored with frozen corpus mean/std."""

    extractor_id = EXTRACTOR_ID

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(std, dtype=np.float64), 1e-6)

    @classmethod
    def fit(cls, corpus: Sequence[MotionSequence]) -> "ToyFeatureExtractor":
        if not corpus:
            raise ValidationError("cannot fit the feature extractor on an empty corpus")
        raw = np.stack([raw_features(seq) for seq in corpus])
        return cls(raw.mean(axis=0), raw.std(axis=0))

    def extract(self, motions: Sequence[MotionSequence], source: str = "real") -> FeatureSet:
        if not motions:
            raise ValidationError("cannot extract features of an empty motion list")
        raw = np.stack([raw_features(seq) for seq in motions])
        return FeatureSet(features=(raw - self.mean) / self.std, source=source, extractor_id=self.extractor_id)


def extract_features(
    motions: Sequence[MotionSequence], extractor: ToyFeatureExtractor, source: str = "real"
) -> FeatureSet:
    return extractor.extract(motions, source)
