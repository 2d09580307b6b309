"""Corpus evaluation: bigram-LM perplexity, statistical-depth Q-value, 0-1 scaling.

The language model is an add-k-smoothed bigram model trained from scratch on
each system corpus and scored on the reference corpus, so absolute
perplexities are specific to this model family; only the ordering across
systems is meaningful. Depth-based similarity uses unit-norm text embeddings
and the Q statistic: the probability that a reference point is no deeper
(w.r.t. the reference) than a comparison point, 0.5 meaning alike.
"""

from __future__ import annotations

import hashlib
import math
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import requests

from .corpus import Corpus, Message

BOS = "<bos>"
EOS = "<eos>"
UNK = "<unk>"

# |depth difference| at or below this counts as a tie (scored 0.5) in q_value.
TIE_TOLERANCE = 1e-12

_TOKEN_RE = re.compile(r"\w+|[^\w\s]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and split out maximal punctuation runs.

    Reserved model tokens can never collide with output tokens because angle
    brackets are split into their own runs.
    """
    return _TOKEN_RE.findall(text.lower())


@dataclass
class NGramLm:
    """Add-k-smoothed bigram model. BOS is context-only and not in the vocabulary."""

    vocabulary: frozenset[str]
    bigram_counts: dict[tuple[str, str], int]
    context_counts: dict[str, int]
    smoothing_k: float = 1.0
    order: int = field(default=2, init=False)

    def __post_init__(self):
        self.vocabulary = frozenset(self.vocabulary)
        if self.smoothing_k <= 0:
            raise ValueError("smoothing_k must be positive")
        for reserved in (UNK, EOS):
            if reserved not in self.vocabulary:
                raise ValueError(f"vocabulary must contain {reserved!r}")
        recount: Counter[str] = Counter()
        for (ctx, _), count in self.bigram_counts.items():
            recount[ctx] += count
        if recount != Counter({c: n for c, n in self.context_counts.items() if n}):
            raise ValueError("context_counts inconsistent with bigram_counts")

    def prob(self, context: str, token: str) -> float:
        """Smoothed p(token | context); unseen contexts fall back to uniform."""
        k = self.smoothing_k
        v = len(self.vocabulary)
        num = self.bigram_counts.get((context, token), 0) + k
        den = self.context_counts.get(context, 0) + k * v
        return num / den


def train_lm(corpus: Corpus, smoothing_k: float = 1.0) -> NGramLm:
    """Count bigrams over (BOS, t1, ..., tn, EOS) for every message."""
    if not corpus.messages:
        raise ValueError("cannot train on an empty corpus")
    token_lists = [tokenize(m.text) for m in corpus.messages]
    if not any(token_lists):
        raise ValueError("no message in the corpus produced any tokens")
    vocab = {tok for tokens in token_lists for tok in tokens} | {UNK, EOS}
    bigram_counts: Counter[tuple[str, str]] = Counter()
    context_counts: Counter[str] = Counter()
    for tokens in token_lists:
        seq = [BOS, *tokens, EOS]
        for ctx, tok in zip(seq, seq[1:]):
            bigram_counts[(ctx, tok)] += 1
            context_counts[ctx] += 1
    return NGramLm(
        vocabulary=frozenset(vocab),
        bigram_counts=dict(bigram_counts),
        context_counts=dict(context_counts),
        smoothing_k=smoothing_k,
    )


def perplexity(lm: NGramLm, message: Message) -> float:
    """exp of the negative mean log-probability over the n+1 events t1..tn, EOS."""
    tokens = tokenize(message.text)
    if not tokens:
        raise ValueError(f"message {message.id!r} produced no tokens")
    mapped = [tok if tok in lm.vocabulary else UNK for tok in tokens]
    seq = [BOS, *mapped, EOS]
    log_sum = 0.0
    for ctx, tok in zip(seq, seq[1:]):
        log_sum += math.log(lm.prob(ctx, tok))
    return math.exp(-log_sum / (len(tokens) + 1))


def mean_perplexity(lm: NGramLm, corpus: Corpus) -> float:
    """Arithmetic mean of per-message perplexities."""
    if not corpus.messages:
        raise ValueError("cannot evaluate an empty corpus")
    return sum(perplexity(lm, m) for m in corpus.messages) / len(corpus.messages)


@dataclass(frozen=True)
class EmbeddingVector:
    """Unit-norm embedding; construction rejects zero and non-unit vectors."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise ValueError("embedding must be a 1-D vector")
        norm = float(np.linalg.norm(values))
        if norm == 0.0:
            raise ValueError("zero embedding vector")
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding norm {norm} is not 1 within 1e-6")

    @classmethod
    def normalized(cls, values: np.ndarray) -> "EmbeddingVector":
        values = np.asarray(values, dtype=float)
        norm = float(np.linalg.norm(values))
        if norm == 0.0:
            raise ValueError("cannot normalize an all-zero vector")
        return cls(values / norm)


DEFAULT_EMBED_DIM = 256


class HashingNgramEmbedder:
    """Offline embedder: character 3-5-grams of the lowercased text, each hashed
    into a fixed dimension by blake2b-64, term-frequency weighted."""

    def __init__(self, dim: int = DEFAULT_EMBED_DIM, n_min: int = 3, n_max: int = 5):
        if dim < 1 or n_min < 1 or n_min > n_max:
            raise ValueError("bad embedder configuration")
        self.dim = dim
        self.n_min = n_min
        self.n_max = n_max

    def raw_vector(self, text: str) -> np.ndarray:
        lowered = text.lower()
        vec = np.zeros(self.dim)
        for n in range(self.n_min, self.n_max + 1):
            for i in range(len(lowered) - n + 1):
                gram = lowered[i : i + n]
                digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
                vec[int.from_bytes(digest, "big") % self.dim] += 1.0
        return vec


class RemoteEmbedder:
    """Fetches vectors from an embeddings HTTP endpoint (OpenAI-compatible shape)."""

    def __init__(self, endpoint_url: str, model: str, api_key_env: str = "OPENAI_API_KEY", timeout_seconds: int = 60):
        self.endpoint_url = endpoint_url
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_seconds = timeout_seconds

    def raw_vector(self, text: str) -> np.ndarray:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise RuntimeError(f"environment variable {self.api_key_env} is not set")
        resp = requests.post(
            self.endpoint_url,
            json={"model": self.model, "input": text},
            headers={"Authorization": f"Bearer {key}"},
            timeout=self.timeout_seconds,
        )
        if resp.status_code != 200:
            raise RuntimeError(f"embeddings endpoint returned HTTP {resp.status_code}")
        try:
            return np.asarray(resp.json()["data"][0]["embedding"], dtype=float)
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise RuntimeError(f"malformed embeddings response: {exc}") from exc


def embed(text: str, provider) -> EmbeddingVector:
    if not text:
        raise ValueError("cannot embed empty text")
    raw = provider.raw_vector(text)
    if not np.any(raw):
        raise ValueError("embedding provider returned an all-zero vector")
    return EmbeddingVector.normalized(raw)


def embed_corpus(corpus: Corpus, provider) -> list[EmbeddingVector]:
    return [embed(m.text, provider) for m in corpus.messages]


def depth(x: EmbeddingVector, reference: Sequence[EmbeddingVector]) -> float:
    """2 minus the mean cosine distance from x to the reference points; in [0, 2].

    A point of the reference is compared against itself too (no leave-one-out).
    """
    if not reference:
        raise ValueError("reference must be non-empty")
    ref = np.stack([v.values for v in reference])
    cos = ref @ x.values
    return 2.0 - float(np.mean(1.0 - cos))


def q_value(F: Sequence[EmbeddingVector], G: Sequence[EmbeddingVector]) -> float:
    """Empirical P(D(X;F) <= D(Y;F)) for X in F, Y in G, ties scored 0.5.

    Equals exactly 0.5 when G is F, for any finite F.
    """
    if not F or not G:
        raise ValueError("both corpora must be non-empty")
    depths_f = np.array([depth(x, F) for x in F])
    depths_g = np.array([depth(y, F) for y in G])
    df = depths_f[:, None]
    dg = depths_g[None, :]
    scores = np.where(np.abs(df - dg) <= TIE_TOLERANCE, 0.5, np.where(df < dg, 1.0, 0.0))
    return float(scores.sum()) / (len(F) * len(G))


@dataclass(frozen=True)
class SystemMetrics:
    """Raw metric values for one generation system."""

    system: str
    mean_perplexity: float
    q_value: float


@dataclass(frozen=True)
class EvalEntry:
    system: str
    mean_perplexity: float
    q_value: float
    score_perplexity: float
    score_depth: float

    def __post_init__(self):
        for score in (self.score_perplexity, self.score_depth):
            if not 0.0 <= score <= 1.0:
                raise ValueError(f"normalized score {score} outside [0, 1]")


def _scale(values: list[float], invert: bool) -> list[float]:
    lo, hi = min(values), max(values)
    if lo == hi:
        return [1.0] * len(values)
    scaled = [(v - lo) / (hi - lo) for v in values]
    return [1.0 - s for s in scaled] if invert else scaled


def normalize_report(raw: Sequence[SystemMetrics]) -> list[EvalEntry]:
    """Min-max scale each metric across systems; perplexity is inverted so higher=better.

    With a single system (or all-equal values) a metric's scores degenerate to 1.
    """
    if not raw:
        raise ValueError("no systems to report on")
    perp_scores = _scale([m.mean_perplexity for m in raw], invert=True)
    depth_scores = _scale([m.q_value for m in raw], invert=False)
    return [
        EvalEntry(
            system=m.system,
            mean_perplexity=m.mean_perplexity,
            q_value=m.q_value,
            score_perplexity=ps,
            score_depth=ds,
        )
        for m, ps, ds in zip(raw, perp_scores, depth_scores)
    ]


def evaluate_systems(
    reference: Corpus,
    systems: Mapping[str, Corpus],
    provider,
    smoothing_k: float = 1.0,
) -> list[EvalEntry]:
    """Train a bigram LM per system, score it on the reference, and compare
    reference-vs-system embedding depth; then 0-1 scale across systems."""
    if not systems:
        raise ValueError("no systems to evaluate")
    ref_embeddings = embed_corpus(reference, provider)
    raw = []
    for name in sorted(systems):
        corpus = systems[name]
        lm = train_lm(corpus, smoothing_k=smoothing_k)
        raw.append(
            SystemMetrics(
                system=name,
                mean_perplexity=mean_perplexity(lm, reference),
                q_value=q_value(ref_embeddings, embed_corpus(corpus, provider)),
            )
        )
    return normalize_report(raw)
