"""Training-data expansion via bounded synonym substitution.

The default strategy scores each candidate replacement by contextual
similarity: the cosine between sentence embeddings of the original text and
the text with only that replacement applied, computed with the configured
scoring encoder. Candidate words come from a pluggable source; the shipped
source is a word table (TSV), and masked-LM or translation-model backed
sources are external plug-ins behind the same interface. Lexical-synonym and
static-embedding substitution plus back-translation exist behind the same
strategy surface but are off by default: they tend to rephrase or noise the
fallacious structure itself.

Dev/test splits are never augmented.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .corpus import Argument, DatasetSplit, ProvenanceLog
from .encoders import SentenceEncoder
from .errors import EmptyClass
from .text import derive_seed, is_word, load_stopwords, token_spans, tokenize

STRATEGIES = ("ress", "backtranslation", "lexical_synonym", "static_embedding")


@dataclass
class AugmentationConfig:
    strategy: str = "ress"
    substitution_candidates: int = 5
    similarity_threshold: float = 0.85
    max_replacements_per_argument: int = 3
    class_quota: Mapping[str, int] = field(default_factory=dict)

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.max_replacements_per_argument < 1:
            raise ValueError("max_replacements_per_argument must be >= 1")
        if self.substitution_candidates < 1:
            raise ValueError("substitution_candidates must be >= 1")
        if not 0.80 <= self.similarity_threshold <= 0.90:
            raise ValueError("similarity_threshold must lie in [0.80, 0.90]")
        for cls, quota in self.class_quota.items():
            if quota <= 0:
                raise ValueError(f"quota for {cls!r} must be positive")


class CandidateSource(Protocol):
    """Proposes substitute words for one token position."""

    def propose(self, tokens: Sequence[str], index: int) -> Sequence[str]: ...


class TableCandidates:
    """Candidate words from an in-memory table keyed by lowercased word."""

    def __init__(self, table: Mapping[str, Sequence[str]]):
        self.table = {k.lower(): list(v) for k, v in table.items()}

    @classmethod
    def from_tsv(cls, path) -> "TableCandidates":
        table = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                word, cands = line.split("\t")
                table[word] = cands.split(",")
        return cls(table)

    def propose(self, tokens: Sequence[str], index: int) -> Sequence[str]:
        return self.table.get(tokens[index].lower(), [])


def _replace_span(text: str, span: tuple[int, int], new: str) -> str:
    return text[: span[0]] + new + text[span[1] :]


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n else v


class RessAugmenter:
    """Contextual-embedding synonym substitution with bounded edits."""

    def __init__(
        self,
        candidates: CandidateSource,
        scorer: SentenceEncoder,
        stopwords: frozenset[str] | None = None,
    ):
        self.candidates = candidates
        self.scorer = scorer
        self.stopwords = load_stopwords() if stopwords is None else stopwords

    def _eligible(self, tokens: Sequence[str]) -> list[int]:
        return [
            i
            for i, t in enumerate(tokens)
            if is_word(t) and t.lower() not in self.stopwords
        ]

    def _one_variant(self, a: Argument, cfg: AugmentationConfig, rng: np.random.Generator) -> str | None:
        tokens = tokenize(a.text)
        spans = token_spans(a.text)
        eligible = self._eligible(tokens)
        if not eligible:
            return None
        base_vec = _unit(self.scorer.encode([a.text])[0])
        order = rng.permutation(len(eligible))
        target = int(rng.integers(1, cfg.max_replacements_per_argument + 1))
        chosen: list[tuple[int, str]] = []
        for oi in order:
            if len(chosen) >= target:
                break
            i = eligible[oi]
            cands = [
                c
                for c in list(self.candidates.propose(tokens, i))[: cfg.substitution_candidates]
                if c.lower() != tokens[i].lower()
            ]
            if not cands:
                continue
            variants = [_replace_span(a.text, spans[i], c) for c in cands]
            vecs = self.scorer.encode(variants)
            passing = [
                c
                for c, v in zip(cands, vecs)
                if float(_unit(v) @ base_vec) >= cfg.similarity_threshold
            ]
            if not passing:
                continue
            chosen.append((i, passing[int(rng.integers(len(passing)))]))
        if not chosen:
            return None
        out = a.text
        for i, word in sorted(chosen, key=lambda t: -t[0]):
            out = _replace_span(out, spans[i], word)
        return out

    def augment(
        self, a: Argument, cfg: AugmentationConfig, seed: int, n_variants: int = 1
    ) -> list[Argument]:
        """Produce up to n_variants bounded-edit copies; [] when nothing clears
        the threshold (NoCandidates is a result, not an exception)."""
        cfg.validate()
        out = []
        for v in range(n_variants):
            rng = np.random.default_rng(derive_seed("ress", seed, a.id, v))
            text = self._one_variant(a, cfg, rng)
            if text is None:
                continue
            out.append(
                Argument(
                    id=f"{a.id}~aug-{seed}-{v}",
                    text=text,
                    binary_label=a.binary_label,
                    fine_label=a.fine_label,
                    coarse_label=a.coarse_label,
                    source="synthetic",
                    split=a.split,
                    parent_id=a.id,
                )
            )
        return out


class LexicalSynonymAugmenter(RessAugmenter):
    """Dictionary-lookup substitution (WordNet-style); accepts every proposed
    candidate without contextual scoring. Known to introduce excess noise."""

    def _one_variant(self, a, cfg, rng):
        tokens = tokenize(a.text)
        spans = token_spans(a.text)
        eligible = self._eligible(tokens)
        if not eligible:
            return None
        order = rng.permutation(len(eligible))
        target = int(rng.integers(1, cfg.max_replacements_per_argument + 1))
        chosen = []
        for oi in order:
            if len(chosen) >= target:
                break
            i = eligible[oi]
            cands = [
                c
                for c in list(self.candidates.propose(tokens, i))[: cfg.substitution_candidates]
                if c.lower() != tokens[i].lower()
            ]
            if cands:
                chosen.append((i, cands[int(rng.integers(len(cands)))]))
        if not chosen:
            return None
        out = a.text
        for i, word in sorted(chosen, key=lambda t: -t[0]):
            out = _replace_span(out, spans[i], word)
        return out


class StaticEmbeddingAugmenter(RessAugmenter):
    """Word2Vec-style substitution: candidates accepted by word-vector cosine
    against the original word rather than sentence context."""

    def __init__(self, candidates, scorer, word_vectors: Mapping[str, np.ndarray], stopwords=None):
        super().__init__(candidates, scorer, stopwords)
        self.word_vectors = {k.lower(): _unit(np.asarray(v, dtype=np.float32)) for k, v in word_vectors.items()}

    def _one_variant(self, a, cfg, rng):
        tokens = tokenize(a.text)
        spans = token_spans(a.text)
        eligible = self._eligible(tokens)
        if not eligible:
            return None
        order = rng.permutation(len(eligible))
        target = int(rng.integers(1, cfg.max_replacements_per_argument + 1))
        chosen = []
        for oi in order:
            if len(chosen) >= target:
                break
            i = eligible[oi]
            wv = self.word_vectors.get(tokens[i].lower())
            if wv is None:
                continue
            passing = []
            for c in list(self.candidates.propose(tokens, i))[: cfg.substitution_candidates]:
                cv = self.word_vectors.get(c.lower())
                if c.lower() != tokens[i].lower() and cv is not None and float(cv @ wv) >= cfg.similarity_threshold:
                    passing.append(c)
            if passing:
                chosen.append((i, passing[int(rng.integers(len(passing)))]))
        if not chosen:
            return None
        out = a.text
        for i, word in sorted(chosen, key=lambda t: -t[0]):
            out = _replace_span(out, spans[i], word)
        return out


class BackTranslationAugmenter:
    """Round-trip translation through a pivot language.

    Translation models are external plug-ins: pass callables (e.g. wrapping
    locally available translation checkpoints). Output is a full rephrase,
    so the bounded-edit guarantee does not apply to this strategy.
    """

    def __init__(self, to_pivot: Callable[[str], str], from_pivot: Callable[[str], str]):
        self.to_pivot = to_pivot
        self.from_pivot = from_pivot

    def augment(self, a: Argument, cfg: AugmentationConfig, seed: int, n_variants: int = 1) -> list[Argument]:
        cfg.validate()
        text = self.from_pivot(self.to_pivot(a.text))
        if not text or text == a.text:
            return []
        return [
            Argument(
                id=f"{a.id}~aug-{seed}-0",
                text=text,
                binary_label=a.binary_label,
                fine_label=a.fine_label,
                coarse_label=a.coarse_label,
                source="synthetic",
                split=a.split,
                parent_id=a.id,
            )
        ][:n_variants]


def build_augmenter(cfg: AugmentationConfig, candidates: CandidateSource, scorer: SentenceEncoder, **kwargs):
    cfg.validate()
    if cfg.strategy == "ress":
        return RessAugmenter(candidates, scorer, kwargs.get("stopwords"))
    if cfg.strategy == "lexical_synonym":
        return LexicalSynonymAugmenter(candidates, scorer, kwargs.get("stopwords"))
    if cfg.strategy == "static_embedding":
        return StaticEmbeddingAugmenter(candidates, scorer, kwargs["word_vectors"], kwargs.get("stopwords"))
    if cfg.strategy == "backtranslation":
        return BackTranslationAugmenter(kwargs["to_pivot"], kwargs["from_pivot"])
    raise ValueError(f"unknown strategy {cfg.strategy!r}")


def augment_argument(
    a: Argument, cfg: AugmentationConfig, seed: int, *, augmenter, n_variants: int = 1
) -> list[Argument]:
    """Strategy-dispatching convenience wrapper around augmenter.augment."""
    return augmenter.augment(a, cfg, seed, n_variants)


def augment_to_quota(
    split: DatasetSplit,
    cfg: AugmentationConfig,
    seed: int,
    *,
    augmenter,
    provenance: ProvenanceLog | None = None,
) -> DatasetSplit:
    """Top up each quota class to exactly max(original count, quota).

    Fills round-robin over the class's original arguments to minimize
    repetition; classes at or above quota are untouched.
    """
    cfg.validate()
    if split.name != "train":
        raise ValueError("only train splits may be augmented")
    provenance = provenance if provenance is not None else ProvenanceLog()
    counts = split.class_counts()
    out = list(split.arguments)
    for cls in sorted(cfg.class_quota):
        quota = cfg.class_quota[cls]
        have = counts.get(cls, 0)
        if have >= quota:
            continue
        if have == 0:
            raise EmptyClass(f"class {cls!r} has no originals to augment from")
        parents = [a for a in split.arguments if a.label(split.label_space) == cls]
        needed = quota - have
        round_idx = 0
        while needed > 0:
            produced = 0
            for parent in parents:
                if needed == 0:
                    break
                variants = augmenter.augment(
                    parent, cfg, derive_seed(seed, cls, round_idx), n_variants=1
                )
                if not variants:
                    continue
                out.append(variants[0])
                provenance.record(
                    "augment_created", id=variants[0].id, parent=parent.id, cls=cls
                )
                produced += 1
                needed -= 1
            if produced == 0:
                raise RuntimeError(
                    f"augmentation stalled for class {cls!r}: no parent yields a "
                    f"candidate above threshold {cfg.similarity_threshold}"
                )
            round_idx += 1
    return DatasetSplit(split.name, out, split.label_space)
