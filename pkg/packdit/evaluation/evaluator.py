"""Runs a task over the test split and scores it into a MetricsReport."""

from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np
from rich.progress import Progress

from ..config import get_config
from ..core.motion import MotionSequence
from ..data.dataset import ToyDataset
from ..data.grammar import caption_to_spec, class_index, is_grammatical, n_classes
from ..data.oracle import classify_motion
from ..exceptions import ValidationError
from ..inference.requests import SampleRequest
from ..inference.sampler import PackDiTPipeline, SampleResult
from ..models.results import MetricsReport
from ..models.tasks import TaskKind
from ..utils.console import console
from .features import FeatureSet, ToyFeatureExtractor
from .metrics import cider, corpus_bleu, diversity, fid, oracle_match, r_precision_topk

POOL_SIZE = 32
DIVERSITY_PAIRS = 300
EMBEDDING_ID = "oracle-onehot+toy-v1"


def _normalize(caption: str) -> str:
    return " ".join(caption.lower().split())


class Embedder:
    """Shared retrieval space: oracle class one-hot followed by extractor features.

    A motion embeds as its classified class plus its own features; a caption embeds
    as its grammar class plus the mean real features of that class.
    """

    def __init__(self, extractor: ToyFeatureExtractor, reference: Sequence[MotionSequence], captions: Sequence[str]):
        self.extractor = extractor
        feats = extractor.extract(reference).features
        self.dim = feats.shape[1]
        self.centroids = np.zeros((n_classes(), self.dim))
        counts = np.zeros(n_classes())
        for row, caption in zip(feats, captions):
            k = class_index(caption_to_spec(caption))
            self.centroids[k] += row
            counts[k] += 1
        self.centroids /= np.maximum(counts, 1)[:, None]

    def _one_hot(self, k: Optional[int]) -> np.ndarray:
        vec = np.zeros(n_classes())
        if k is not None:
            vec[k] = 1.0
        return vec

    def motions(self, motions: Sequence[MotionSequence]) -> np.ndarray:
        feats = self.extractor.extract(motions, "generated").features
        classes = [class_index(classify_motion(m)) for m in motions]
        return np.stack([np.concatenate([self._one_hot(k), f]) for k, f in zip(classes, feats)])

    def captions(self, captions: Sequence[str]) -> np.ndarray:
        rows = []
        for caption in captions:
            if is_grammatical(caption):
                k = class_index(caption_to_spec(caption))
                rows.append(np.concatenate([self._one_hot(k), self.centroids[k]]))
            else:
                rows.append(np.zeros(n_classes() + self.dim))
        return np.stack(rows)


def _cycle(items: Sequence, n: int) -> List:
    return [items[i % len(items)] for i in range(n)]


def _requests(task: TaskKind, motions, captions, n: int, seed: int, steps: int, eta: float) -> List[SampleRequest]:
    requests = []
    for i in range(n):
        fields = dict(task=task, steps=steps, eta=eta, seed=seed + i, n_frames=motions[i].n_frames)
        if task == TaskKind.T2M:
            fields["caption"] = captions[i]
        elif task in (TaskKind.M2T, TaskKind.PREDICT, TaskKind.INBETWEEN):
            fields["motion"] = motions[i]
        requests.append(SampleRequest(**fields))
    return requests


def run_samples(pipeline: PackDiTPipeline, requests: Sequence[SampleRequest]) -> List[SampleResult]:
    """Sample every request; each is a pure function of its seed, so order of completion is irrelevant."""
    results = []
    with ThreadPoolExecutor(max_workers=get_config().threads) as pool, Progress(console=console, transient=True) as progress:
        task = progress.add_task("[cyan]Sampling...", total=len(requests))
        for result in pool.map(pipeline.sample, requests):
            results.append(result)
            progress.advance(task)
    return results


def _motion_metrics(generated: FeatureSet, real: FeatureSet, seed: int) -> Dict[str, Optional[float]]:
    metrics: Dict[str, Optional[float]] = {"fid": None, "diversity": None}
    if generated.n >= generated.dim + 1 and real.n >= real.dim + 1:
        metrics["fid"] = fid(real, generated)
    if generated.n >= 2:
        metrics["diversity"] = diversity(generated, DIVERSITY_PAIRS, seed)
    return metrics


def _retrieval(embedder: Embedder, motions, captions, seed: int):
    if len(motions) < POOL_SIZE:
        return None
    return r_precision_topk(embedder.motions(motions), embedder.captions(captions), POOL_SIZE, 3, seed)


def evaluate(
    pipeline: PackDiTPipeline,
    dataset: ToyDataset,
    task: TaskKind,
    n: int,
    seed: int = 0,
    steps: Optional[int] = None,
    eta: float = 0.0,
) -> MetricsReport:
    """Sample ``n`` items of ``task`` against the test split and compute its metrics."""
    if n < 1:
        raise ValidationError(f"evaluation needs at least one sample, got n={n}")
    test = dataset["test"]
    if len(test) == 0:
        raise ValidationError("the test split is empty")
    steps = steps or get_config().sample_steps
    extractor = ToyFeatureExtractor.fit(dataset["train"].motions)
    embedder = Embedder(extractor, dataset["train"].motions, dataset["train"].captions)
    real = extractor.extract(test.motions, "real")
    motions = _cycle(test.motions, n)
    captions = _cycle(test.captions, n)

    console.print(f"[bold blue]Evaluating {task.value} on {n} samples[/bold blue]")
    results = run_samples(pipeline, _requests(task, motions, captions, n, seed, steps, eta))
    fields: Dict = dict(task=task.value, n_samples=n, seed=seed, extractor_id=extractor.extractor_id)
    metadata = {"steps": str(steps), "eta": str(eta), "embedding": EMBEDDING_ID}

    if task in (TaskKind.T2M, TaskKind.UNCOND_MOTION, TaskKind.PREDICT, TaskKind.INBETWEEN, TaskKind.JOINT):
        generated = [r.motion for r in results]
        fields.update(_motion_metrics(extractor.extract(generated, "generated"), real, seed))
        if task == TaskKind.T2M:
            fields["oracle_match"] = oracle_match(generated, captions)
            fields["r_precision"] = _retrieval(embedder, generated, captions, seed)
        elif task in (TaskKind.PREDICT, TaskKind.INBETWEEN):
            fields["oracle_match"] = oracle_match(generated, captions)
        elif task == TaskKind.JOINT:
            texts = [r.caption for r in results]
            consistent = [
                is_grammatical(c) and classify_motion(m).class_key == caption_to_spec(c).class_key
                for m, c in zip(generated, texts)
            ]
            fields["oracle_match"] = float(np.mean(consistent))
            fields["r_precision"] = _retrieval(embedder, generated, texts, seed)
            metadata["grammatical_rate"] = f"{np.mean([is_grammatical(c) for c in texts]):.6f}"

    if task == TaskKind.M2T:
        texts = [_normalize(r.caption) for r in results]
        references = [[_normalize(c)] for c in captions]
        fields["bleu"] = tuple(corpus_bleu(texts, references, max_n=k) for k in range(1, 5))
        fields["cider"] = cider(texts, references, [_normalize(c) for c in test.captions])
        fields["oracle_match"] = float(np.mean([t == r[0] for t, r in zip(texts, references)]))
        fields["r_precision"] = _retrieval(embedder, motions, texts, seed)
        metadata.update(bleu="corpus", cider="plain")

    if task == TaskKind.UNCOND_TEXT:
        texts = [r.caption for r in results]
        metadata["grammatical_rate"] = f"{np.mean([is_grammatical(c) for c in texts]):.6f}"
        metadata["distinct_captions"] = str(len(set(_normalize(c) for c in texts)))

    return MetricsReport(metadata=metadata, **fields)
