"""Knowledge injection: link sentence tokens to commonsense triples, rank
them by contextual similarity, build sentence trees with soft positions and
a visible matrix, and classify with a masked-self-attention encoder.

The knowledge store is three-column tab-separated text (subject, relation,
object; UTF-8), indexed in memory by lowercased subject. Only fourteen
highly semantic relations are admitted. Visibility rules:

(i)   trunk token <-> trunk token: visible;
(ii)  branch token <-> its own anchor and same-branch tokens: visible;
(iii) branch token <-> other trunk tokens or other branches: invisible.

Trunk soft positions run 0..n-1; branch-token soft positions continue from
the anchor's (+1, +2, ...) along the branch chain. Removing all branches
restores the original token sequence bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .corpus import DatasetSplit
from .encoders import (
    SentenceEncoder,
    TinyEncoderConfig,
    TinyTransformerEncoder,
    bucket_id,
    pad_batch,
)
from .evalreport import EvalReport, per_class_f1, weighted_metrics
from .models import TwoLayerHead, weight_hash
from .text import is_word, load_stopwords, tokenize
from .training import TrainSettings, train_loop

RELATION_WHITELIST = frozenset(
    {
        "Causes",
        "UsedFor",
        "CapableOf",
        "CausesDesire",
        "IsA",
        "SymbolOf",
        "MadeOf",
        "LocatedNear",
        "Desires",
        "AtLocation",
        "HasProperty",
        "PartOf",
        "HasFirstSubevent",
        "HasLastSubevent",
    }
)


@dataclass(frozen=True)
class KnowledgeTriple:
    subject: str
    relation: str
    object: str

    def __post_init__(self):
        if self.relation not in RELATION_WHITELIST:
            raise ValueError(f"relation {self.relation!r} outside the 14-relation whitelist")


@dataclass
class KiConfig:
    branching_factor: int = 5
    hops: int = 1
    similarity_ranking: bool = True
    learning_rate: float = 2e-5
    dropout: float = 0.5
    epochs: int = 5
    encoder: TinyEncoderConfig = field(default_factory=TinyEncoderConfig)

    def validate(self) -> None:
        if self.branching_factor < 1:
            raise ValueError("branching_factor must be >= 1")
        if self.hops < 1:
            raise ValueError("hops must be >= 1")


class TripleStore:
    """Read-only triple index keyed by lowercased subject."""

    def __init__(self, triples: Sequence[KnowledgeTriple] = ()):
        self._by_subject: dict[str, list[KnowledgeTriple]] = {}
        for t in triples:
            self._by_subject.setdefault(t.subject.lower(), []).append(t)

    @classmethod
    def from_tsv(cls, path) -> "TripleStore":
        """Load subject<TAB>relation<TAB>object rows; rows with relations
        outside the whitelist are skipped."""
        triples = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ValueError(f"triple rows need 3 columns, got {line!r}")
                if parts[1] not in RELATION_WHITELIST:
                    continue
                triples.append(KnowledgeTriple(*parts))
        return cls(triples)

    def lookup(self, subject: str) -> list[KnowledgeTriple]:
        return list(self._by_subject.get(subject.lower(), []))

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_subject.values())


def link_triples(
    sentence: str, store: TripleStore, stopwords: frozenset[str] | None = None
) -> dict[str, list[KnowledgeTriple]]:
    """Match non-stopword word tokens (as subjects, case-insensitively) to
    store triples. Tokens without matches map to empty lists."""
    stopwords = load_stopwords() if stopwords is None else stopwords
    out: dict[str, list[KnowledgeTriple]] = {}
    for tok in tokenize(sentence):
        low = tok.lower()
        if not is_word(tok) or low in stopwords or low in out:
            continue
        matches = [t for t in store.lookup(low) if t.relation in RELATION_WHITELIST]
        if matches:
            out[low] = matches
    return out


def relation_words(relation: str) -> str:
    """Camel-case relation split into lowercase words: UsedFor -> 'used for'."""
    words, current = [], ""
    for ch in relation:
        if ch.isupper() and current:
            words.append(current)
            current = ch
        else:
            current += ch
    words.append(current)
    return " ".join(w.lower() for w in words)


def lexicalize(triple: KnowledgeTriple) -> str:
    return f"{triple.subject} {relation_words(triple.relation)} {triple.object}"


def rank_triples(
    sentence: str,
    candidates: Sequence[KnowledgeTriple],
    encoder: SentenceEncoder,
    keep: int | None = None,
) -> list[KnowledgeTriple]:
    """Order candidates by cosine similarity of their lexicalized text to the
    whole sentence, descending; ties keep input order; truncate to `keep`."""
    if not candidates:
        return []
    texts = [lexicalize(t) for t in candidates]
    vectors = encoder.encode([sentence] + texts)
    base = vectors[0] / (np.linalg.norm(vectors[0]) or 1.0)
    scores = []
    for i, v in enumerate(vectors[1:]):
        n = np.linalg.norm(v)
        scores.append(float((v / n) @ base) if n else -1.0)
    order = sorted(range(len(candidates)), key=lambda i: (-scores[i], i))
    ranked = [candidates[i] for i in order]
    return ranked if keep is None else ranked[:keep]


def expand_hops(
    seeds: Sequence[KnowledgeTriple],
    store: TripleStore,
    hops: int,
    branching_factor: int,
) -> list[KnowledgeTriple]:
    """Iteratively query hop h-1 objects as hop h subjects, b-limited per
    subject and deduplicated. hops=1 returns the seeds unchanged."""
    out = list(dict.fromkeys(seeds))
    seen = set(out)
    frontier = out
    for _ in range(hops - 1):
        next_frontier = []
        for triple in frontier:
            added = 0
            for t in store.lookup(triple.object):
                if t in seen or added >= branching_factor:
                    continue
                seen.add(t)
                out.append(t)
                next_frontier.append(t)
                added += 1
        frontier = next_frontier
        if not frontier:
            break
    return out


@dataclass(frozen=True)
class TreeToken:
    text: str
    hard_pos: int
    soft_pos: int
    branch_id: int  # 0 for trunk
    anchor: int | None = None  # trunk index of the anchor, branch tokens only


@dataclass
class SentenceTree:
    tokens: list[TreeToken]
    visible: np.ndarray  # [T, T] bool, symmetric, all-visible diagonal

    def trunk_tokens(self) -> list[str]:
        return [t.text for t in sorted(self.tokens, key=lambda t: t.hard_pos) if t.branch_id == 0]

    def __len__(self) -> int:
        return len(self.tokens)

    def to_debug_json(self) -> str:
        visible_pairs = [
            [i, j]
            for i in range(len(self.tokens))
            for j in range(len(self.tokens))
            if i < j and self.visible[i, j]
        ]
        return json.dumps(
            {
                "tokens": [t.text for t in self.tokens],
                "soft_positions": [t.soft_pos for t in self.tokens],
                "branch_ids": [t.branch_id for t in self.tokens],
                "anchors": [t.anchor for t in self.tokens],
                "visible_pairs": visible_pairs,
            },
            sort_keys=True,
        )


def build_sentence_tree(
    sentence: str,
    branches_per_anchor: Mapping[int, Sequence[Sequence[KnowledgeTriple]]],
) -> SentenceTree:
    """Assemble the flattened tree: trunk tokens in order, each anchor's
    branches inserted right after it. Each chain of triples is one branch;
    a chain contributes its triples' relation words and object tokens in
    sequence, soft positions continuing +1 from the anchor along the chain.
    """
    trunk = tokenize(sentence)
    tokens: list[TreeToken] = []
    branch_id = 0
    hard = 0
    for i, tok in enumerate(trunk):
        tokens.append(TreeToken(tok, hard, i, 0))
        hard += 1
        for chain in branches_per_anchor.get(i, ()):  # ranked order
            branch_id += 1
            soft = i
            for triple in chain:
                for word in tokenize(relation_words(triple.relation)) + tokenize(triple.object):
                    soft += 1
                    tokens.append(TreeToken(word, hard, soft, branch_id, anchor=i))
                    hard += 1
    n = len(tokens)
    visible = np.zeros((n, n), dtype=bool)
    anchor_hard: dict[int, int] = {
        t.soft_pos: t.hard_pos for t in tokens if t.branch_id == 0
    }
    for a in tokens:
        for b in tokens:
            if a.branch_id == 0 and b.branch_id == 0:
                ok = True  # rule (i)
            elif a.branch_id == b.branch_id:
                ok = True  # rule (ii): same branch
            elif a.branch_id == 0:
                ok = b.anchor is not None and anchor_hard[b.anchor] == a.hard_pos
            elif b.branch_id == 0:
                ok = a.anchor is not None and anchor_hard[a.anchor] == b.hard_pos
            else:
                ok = False  # rule (iii): different branches
            visible[a.hard_pos, b.hard_pos] = ok
    return SentenceTree(tokens, visible)


def inject(
    sentence: str,
    store: TripleStore,
    cfg: KiConfig,
    encoder: SentenceEncoder | None = None,
    stopwords: frozenset[str] | None = None,
    max_tokens: int | None = None,
) -> SentenceTree:
    """End-to-end tree construction for one sentence.

    Per matched token: rank its triples against the sentence (when enabled),
    keep the top branching_factor as seeds, extend each seed along its own
    branch for the configured hops, and attach at every occurrence of the
    token. Oversized trees drop lowest-ranked branches first, never trunk
    tokens.
    """
    cfg.validate()
    linked = link_triples(sentence, store, stopwords)
    trunk = tokenize(sentence)
    # (anchor index, rank, chain) in rank order per anchor
    branches: list[tuple[int, int, list[KnowledgeTriple]]] = []
    for token, triples in linked.items():
        if cfg.similarity_ranking and encoder is not None:
            seeds = rank_triples(sentence, triples, encoder, keep=cfg.branching_factor)
        else:
            seeds = list(triples)[: cfg.branching_factor]
        chains = []
        for seed in seeds:
            chain = expand_hops([seed], store, cfg.hops, cfg.branching_factor)
            chains.append(chain)
        for i, tok in enumerate(trunk):
            if tok.lower() == token:
                for rank, chain in enumerate(chains):
                    branches.append((i, rank, chain))
    if max_tokens is not None:
        branches.sort(key=lambda t: (t[1], t[0]))  # best ranks first
        budget = max_tokens - len(trunk)
        kept = []
        for anchor, rank, chain in branches:
            size = sum(
                len(tokenize(relation_words(t.relation))) + len(tokenize(t.object))
                for t in chain
            )
            if size <= budget:
                kept.append((anchor, rank, chain))
                budget -= size
        branches = kept
    per_anchor: dict[int, list[list[KnowledgeTriple]]] = {}
    for anchor, rank, chain in sorted(branches, key=lambda t: (t[0], t[1])):
        per_anchor.setdefault(anchor, []).append(chain)
    return build_sentence_tree(sentence, per_anchor)


class KiModel(nn.Module):
    """Masked-self-attention encoder consuming soft positions and the
    visible matrix, with a two-layer classification head."""

    def __init__(self, cfg: KiConfig, classes: Sequence[str], seed: int = 0):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.classes = list(classes)
        self.encoder = TinyTransformerEncoder(cfg.encoder)
        self.head = TwoLayerHead(
            cfg.encoder.dim, 2 * cfg.encoder.dim, len(classes), cfg.dropout,
            seed=cfg.encoder.seed + 505,
        )

    def batch_trees(self, trees: Sequence[SentenceTree]):
        cfg = self.cfg.encoder
        ids, positions, trunks, visibles = [], [], [], []
        for tree in trees:
            toks = tree.tokens[: cfg.max_len]
            ids.append([bucket_id(t.text, cfg.vocab_buckets) for t in toks] or [2])
            positions.append([t.soft_pos for t in toks] or [0])
            trunks.append([t.branch_id == 0 for t in toks] or [True])
            visibles.append(tree.visible[: len(toks), : len(toks)])
        width = max(len(row) for row in ids)
        id_t, real = pad_batch(ids)
        pos_t = torch.zeros((len(trees), width), dtype=torch.long)
        trunk_t = torch.zeros((len(trees), width), dtype=torch.bool)
        vis_t = torch.zeros((len(trees), width, width), dtype=torch.bool)
        for i, (p, tr, v) in enumerate(zip(positions, trunks, visibles)):
            pos_t[i, : len(p)] = torch.tensor(p, dtype=torch.long)
            trunk_t[i, : len(tr)] = torch.tensor(tr, dtype=torch.bool)
            n = v.shape[0] if v.size else len(p)
            if v.size:
                vis_t[i, :n, :n] = torch.from_numpy(v)
            else:
                vis_t[i, : len(p), : len(p)] = True
        return id_t, real, pos_t, vis_t, trunk_t

    def forward(self, trees: Sequence[SentenceTree]) -> torch.Tensor:
        ids, real, positions, visible, trunk = self.batch_trees(trees)
        hidden = self.encoder(ids, real, positions=positions, visible=visible, trunk=trunk)
        return self.head(hidden[:, 0])

    @torch.no_grad()
    def predict_trees(self, trees: Sequence[SentenceTree]) -> list[str]:
        self.eval()
        logits = self.forward(trees)
        return [self.classes[i] for i in logits.argmax(dim=1).tolist()]


class KiPipeline:
    """Trained KI model plus its store/config; evaluation-facing surface."""

    def __init__(
        self,
        model: KiModel,
        store: TripleStore,
        ranking_encoder: SentenceEncoder | None = None,
    ):
        self.model = model
        self.store = store
        self.ranking_encoder = ranking_encoder
        self.label_space = model.classes

    def tree_for(self, text: str) -> SentenceTree:
        return inject(
            text, self.store, self.model.cfg, self.ranking_encoder,
            max_tokens=self.model.cfg.encoder.max_len,
        )

    def predict(self, texts: Sequence[str]) -> list[str]:
        trees = [self.tree_for(t) for t in texts]
        return self.model.predict_trees(trees)

    def explain(self, text: str) -> dict:
        tree = self.tree_for(text)
        label = self.model.predict_trees([tree])[0]
        trunk = tree.trunk_tokens()
        seen, triples = set(), []
        for tok in tree.tokens:
            if tok.branch_id != 0 and tok.branch_id not in seen:
                seen.add(tok.branch_id)
                anchor = trunk[tok.anchor] if tok.anchor is not None else None
                branch_words = [t.text for t in tree.tokens if t.branch_id == tok.branch_id]
                triples.append({"anchor": anchor, "branch": " ".join(branch_words)})
        return {"prediction": label, "triples": triples}

    def weight_hash(self) -> str:
        return weight_hash(self.model)


def train_ki(
    splits: dict[str, DatasetSplit],
    cfg: KiConfig,
    *,
    store: TripleStore,
    ranking_encoder: SentenceEncoder | None = None,
    batch_size: int = 16,
    learning_rate: float | None = None,
    epochs: int | None = None,
    seed: int = 0,
    dataset_name: str = "synthetic",
) -> tuple[KiPipeline, EvalReport]:
    """Fine-tune on precomputed sentence trees; explanation records list the
    injected triples per prediction."""
    cfg.validate()
    train, dev, test = splits["train"], splits["dev"], splits["test"]
    classes = sorted(set(train.labels()))
    model = KiModel(cfg, classes, seed=seed)
    pipeline = KiPipeline(model, store, ranking_encoder)

    train_trees = [pipeline.tree_for(t) for t in train.texts()]
    dev_trees = [pipeline.tree_for(t) for t in dev.texts()]
    train_y = [classes.index(y) for y in train.labels()]

    def loss_of_batch(batch_idx: list[int]) -> torch.Tensor:
        logits = model([train_trees[i] for i in batch_idx])
        target = torch.tensor([train_y[i] for i in batch_idx], dtype=torch.long)
        return F.cross_entropy(logits, target)

    def dev_predict() -> list[str]:
        return model.predict_trees(dev_trees)

    settings = TrainSettings(
        epochs=epochs if epochs is not None else cfg.epochs,
        batch_size=batch_size,
        learning_rate=learning_rate if learning_rate is not None else cfg.learning_rate,
    )
    result = train_loop(
        model, train, dev, classes, settings, seed,
        loss_of_batch=loss_of_batch, dev_predict=dev_predict,
    )

    report = EvalReport(
        task=train.label_space, dataset=dataset_name, method="ki",
        label_space=classes, seeds=[seed], epoch_seconds=result.epoch_seconds,
    )
    gold = test.labels()
    preds, explanations = [], []
    for a in test.arguments:
        record = pipeline.explain(a.text)
        preds.append(record["prediction"])
        explanations.append({"id": a.id, **record})
    report.runs.append(weighted_metrics(gold, preds, classes))
    report.per_class = per_class_f1(gold, preds, classes)
    report.explanations = explanations
    return pipeline, report
