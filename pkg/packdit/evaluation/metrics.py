"""FID, diversity, R-precision, BLEU, CIDEr and oracle match."""

import math
from collections import Counter
from typing import List, Sequence, Tuple, Union

import numpy as np

from ..core.motion import MotionSequence
from ..data.grammar import caption_to_spec
from ..data.oracle import classify_motion
from ..exceptions import ValidationError
from ..models.toy import ToyMotionSpec
from .features import FeatureSet

FID_EPS = 1e-6


def _check_extractors(a: FeatureSet, b: FeatureSet) -> None:
    if a.extractor_id != b.extractor_id:
        raise ValidationError(f"cannot compare features of {a.extractor_id!r} and {b.extractor_id!r}")


def _sqrt_psd(matrix: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh((matrix + matrix.T) / 2)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def fid(a: FeatureSet, b: FeatureSet) -> float:
    """Frechet distance between Gaussian fits of two feature sets."""
    _check_extractors(a, b)
    for fs in (a, b):
        if fs.n < fs.dim + 1:
            raise ValidationError(f"FID needs at least {fs.dim + 1} samples per set, got {fs.n}")
    eye = FID_EPS * np.eye(a.dim)
    mu_a, mu_b = a.features.mean(axis=0), b.features.mean(axis=0)
    cov_a = np.cov(a.features, rowvar=False) + eye
    cov_b = np.cov(b.features, rowvar=False) + eye
    sqrt_a = _sqrt_psd(cov_a)
    middle = sqrt_a @ cov_b @ sqrt_a
    eigenvalues = np.linalg.eigvalsh((middle + middle.T) / 2)
    tr_covmean = np.sqrt(np.clip(eigenvalues, 0.0, None)).sum()
    value = float(((mu_a - mu_b) ** 2).sum() + np.trace(cov_a) + np.trace(cov_b) - 2 * tr_covmean)
    return max(value, 0.0)


def diversity(a: FeatureSet, n_pairs: int = 300, seed: int = 0) -> float:
    """Mean distance over ``n_pairs`` seeded pairs of distinct indices."""
    if a.n < 2:
        raise ValidationError(f"diversity needs at least 2 samples, got {a.n}")
    rng = np.random.default_rng(seed)
    first = rng.integers(0, a.n, size=n_pairs)
    second = (first + rng.integers(1, a.n, size=n_pairs)) % a.n
    return float(np.linalg.norm(a.features[first] - a.features[second], axis=1).mean())


def r_precision_topk(
    motion_embeddings: np.ndarray,
    text_embeddings: np.ndarray,
    pool_size: int = 32,
    top_k: int = 3,
    seed: int = 0,
) -> Tuple[float, ...]:
    """(R@1, ..., R@top_k): rank of each text's true motion inside shuffled pools."""
    motion_embeddings = np.asarray(motion_embeddings, dtype=np.float64)
    text_embeddings = np.asarray(text_embeddings, dtype=np.float64)
    if motion_embeddings.shape != text_embeddings.shape:
        raise ValidationError("motion and text embeddings must be aligned row by row")
    n = motion_embeddings.shape[0]
    if n < pool_size or pool_size < 2:
        raise ValidationError(f"R-precision needs at least {pool_size} pairs, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    hits = np.zeros(top_k)
    queries = 0
    for start in range(0, n - pool_size + 1, pool_size):
        pool = order[start : start + pool_size]
        diff = text_embeddings[pool][:, None, :] - motion_embeddings[pool][None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        true = np.diag(dist)
        ranks = (dist < true[:, None]).sum(axis=1) + 1
        for k in range(top_k):
            hits[k] += (ranks <= k + 1).sum()
        queries += pool_size
    return tuple(float(h / queries) for h in hits)


def r_precision(
    motion_embeddings: np.ndarray, text_embeddings: np.ndarray, pool_size: int = 32, k: int = 1, seed: int = 0
) -> float:
    return r_precision_topk(motion_embeddings, text_embeddings, pool_size, top_k=k, seed=seed)[k - 1]


def _ngrams(words: Sequence[str], n: int) -> Counter:
    return Counter(tuple(words[i : i + n]) for i in range(len(words) - n + 1))


def _closest_length(candidate_len: int, references: Sequence[Sequence[str]]) -> int:
    return min((abs(len(r) - candidate_len), len(r)) for r in references)[1]


def _clipped(candidate: Sequence[str], references: Sequence[Sequence[str]], n: int) -> Tuple[int, int]:
    counts = _ngrams(candidate, n)
    max_ref = Counter()
    for ref in references:
        for gram, count in _ngrams(ref, n).items():
            max_ref[gram] = max(max_ref[gram], count)
    matched = sum(min(count, max_ref[gram]) for gram, count in counts.items())
    return matched, sum(counts.values())


def bleu(candidate: str, references: Sequence[str], max_n: int = 4) -> float:
    """Sentence BLEU; n >= 2 precisions use add-one smoothing."""
    cand = candidate.split()
    refs = [r.split() for r in references if r.split()]
    if not cand or not refs:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        matched, total = _clipped(cand, refs, n)
        if n == 1:
            if matched == 0:
                return 0.0
            precision = matched / total
        else:
            precision = (matched + 1) / (total + 1)
        log_sum += math.log(precision)
    r = _closest_length(len(cand), refs)
    bp = 1.0 if len(cand) >= r else math.exp(1 - r / len(cand))
    return bp * math.exp(log_sum / max_n)


def corpus_bleu(candidates: Sequence[str], reference_sets: Sequence[Sequence[str]], max_n: int = 4) -> float:
    """Corpus BLEU over summed clipped counts, unsmoothed."""
    if len(candidates) != len(reference_sets):
        raise ValidationError("one reference set per candidate is required")
    matched = np.zeros(max_n)
    totals = np.zeros(max_n)
    c_len = r_len = 0
    for candidate, references in zip(candidates, reference_sets):
        cand = candidate.split()
        refs = [r.split() for r in references if r.split()]
        if not refs:
            raise ValidationError("every candidate needs a nonempty reference")
        c_len += len(cand)
        r_len += _closest_length(len(cand), refs)
        for n in range(1, max_n + 1):
            m, t = _clipped(cand, refs, n)
            matched[n - 1] += m
            totals[n - 1] += t
    if c_len == 0 or (matched == 0).any():
        return 0.0
    log_precision = np.log(matched / totals).mean()
    bp = 1.0 if c_len >= r_len else math.exp(1 - r_len / c_len)
    return float(bp * math.exp(log_precision))


def cider(
    candidates: Sequence[str],
    reference_sets: Sequence[Sequence[str]],
    corpus: Sequence[str],
    max_n: int = 4,
) -> float:
    """Plain CIDEr: mean over n of TF-IDF cosine, averaged over references, times 10."""
    if not corpus:
        raise ValidationError("CIDEr needs a nonempty corpus for document frequencies")
    if len(candidates) != len(reference_sets):
        raise ValidationError("one reference set per candidate is required")
    docs = [doc.split() for doc in corpus]
    df = [Counter() for _ in range(max_n)]
    for words in docs:
        for n in range(1, max_n + 1):
            df[n - 1].update(set(_ngrams(words, n)))
    log_n = math.log(len(docs))

    def idf(gram, n: int) -> float:
        # a one-document corpus carries no frequency information: weight every n-gram alike
        if len(docs) == 1:
            return 1.0
        return log_n - math.log(max(df[n - 1][gram], 1))

    def vector(words: List[str], n: int):
        counts = _ngrams(words, n)
        length = max(len(words), 1)
        return {g: (c / length) * idf(g, n) for g, c in counts.items()}

    def cosine(u, v) -> float:
        norm_u = math.sqrt(sum(x * x for x in u.values()))
        norm_v = math.sqrt(sum(x * x for x in v.values()))
        if norm_u == 0 or norm_v == 0:
            return 0.0
        return sum(x * v.get(g, 0.0) for g, x in u.items()) / (norm_u * norm_v)

    scores = []
    for candidate, references in zip(candidates, reference_sets):
        if not references:
            raise ValidationError("every candidate needs at least one reference")
        cand = candidate.split()
        per_n = []
        for n in range(1, max_n + 1):
            cv = vector(cand, n)
            per_n.append(np.mean([cosine(cv, vector(r.split(), n)) for r in references]))
        scores.append(10.0 * float(np.mean(per_n)))
    return float(np.mean(scores)) if scores else 0.0


def oracle_match(
    samples: Sequence[MotionSequence], truths: Sequence[Union[ToyMotionSpec, str]]
) -> float:
    """Fraction of samples whose oracle class equals the prompt's (or truth's) class."""
    if len(samples) != len(truths):
        raise ValidationError(f"{len(samples)} samples but {len(truths)} prompts")
    if not samples:
        raise ValidationError("oracle match of an empty sample list")
    hits = 0
    for seq, truth in zip(samples, truths):
        spec = caption_to_spec(truth) if isinstance(truth, str) else truth
        hits += classify_motion(seq).class_key == spec.class_key
    return hits / len(samples)
