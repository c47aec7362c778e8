"""Instance-based reasoning classifier.

A new case is concatenated with its retrieved cases, the pair is encoded,
multi-head attention adapts the combined sequence with the new case as the
query, and a two-layer gelu head classifies the adapted representation.
With zero cases and attention disabled this reduces exactly to the plain
encoder + head baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .corpus import Argument, DatasetSplit
from .encoders import EncoderHandle, TinyEncoderConfig, ids_for_text, pad_batch, resolve_encoder
from .errors import ShapeMismatch
from .evalreport import EvalReport, per_class_f1, weighted_metrics
from .models import TwoLayerHead, weight_hash
from .retrieval import RetrievalResult, Retriever, build_case_base
from .text import tokenize
from .training import TrainSettings, TrainResult, train_loop


@dataclass
class IbrConfig:
    k_cases: int = 3
    num_attention_heads: int = 8
    attention_enabled: bool = True
    classifier_hidden_dim: int = 64
    dropout: float = 0.1
    encoder: TinyEncoderConfig = field(default_factory=TinyEncoderConfig)
    separator_token: str = "<SEP>"
    retriever: EncoderHandle = field(
        default_factory=lambda: EncoderHandle("hash", 256, "mean")
    )
    similarity_threshold: float = 0.5
    weight_decay: float = 0.0

    def validate(self) -> None:
        if not 0 <= self.k_cases <= 10:
            raise ValueError("k_cases must lie in [0, 10]")
        if self.encoder.dim % self.num_attention_heads != 0:
            raise ValueError("attention heads must divide the encoder hidden size")


def compose_input(
    case_text: str,
    neighbor_texts: Sequence[str],
    separator: str = "<SEP>",
    max_tokens: int | None = None,
) -> str:
    """S = case ⊕ separator ⊕ neighbors in rank order, right-truncated.

    The new case is never cut in favor of context: its tokens are placed
    first and neighbors fill whatever room remains. Tokens re-join with
    single spaces.
    """
    case_tokens = tokenize(case_text)
    if not neighbor_texts:
        if max_tokens is None or len(case_tokens) <= max_tokens:
            return case_text
        return " ".join(case_tokens[:max_tokens])
    tokens = list(case_tokens if max_tokens is None else case_tokens[:max_tokens])
    tokens.append(separator)
    for text in neighbor_texts:
        tokens.extend(tokenize(text))
    if max_tokens is not None:
        tokens = tokens[:max_tokens]
    return " ".join(tokens)


class IbrModel(nn.Module):
    """Encoder + multi-head-attention adapter + two-layer classifier."""

    def __init__(self, cfg: IbrConfig, classes: Sequence[str], seed: int = 0):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.classes = list(classes)
        from .encoders import TinyTransformerEncoder

        self.encoder = TinyTransformerEncoder(cfg.encoder)
        with torch.random.fork_rng():
            torch.manual_seed(cfg.encoder.seed + 101)
            self.attention = nn.MultiheadAttention(
                cfg.encoder.dim, cfg.num_attention_heads, dropout=cfg.dropout, batch_first=True
            )
        self.head = TwoLayerHead(
            cfg.encoder.dim, cfg.classifier_hidden_dim, len(classes), cfg.dropout,
            seed=cfg.encoder.seed + 202,
        )

    def _encode(self, texts: Sequence[str]):
        cfg = self.cfg.encoder
        id_lists = [ids_for_text(t, cfg.vocab_buckets)[: cfg.max_len] or [2] for t in texts]
        ids, real = pad_batch(id_lists)
        hidden = self.encoder(ids, real)
        real_cls = torch.cat([torch.ones(len(texts), 1, dtype=torch.bool), real], dim=1)
        return hidden, real_cls

    def adapt(
        self,
        e_case: torch.Tensor,
        e_combined: torch.Tensor,
        combined_real: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Attention output with the new case as query and the combined
        sequence as keys and values; matches the query's shape. Disabled
        attention passes the case states through untouched."""
        if not self.cfg.attention_enabled:
            return e_case
        if e_case.shape[-1] != e_combined.shape[-1]:
            raise ShapeMismatch(
                f"hidden widths differ: {e_case.shape[-1]} vs {e_combined.shape[-1]}"
            )
        key_padding = None if combined_real is None else ~combined_real
        adapted, _ = self.attention(
            e_case, e_combined, e_combined, key_padding_mask=key_padding, need_weights=False
        )
        return adapted

    def classify_states(self, adapted: torch.Tensor) -> torch.Tensor:
        """Class probabilities from token states (first-token pooling)."""
        return F.softmax(self.head(adapted[:, 0]), dim=-1)

    def forward(self, case_texts: Sequence[str], combined_texts: Sequence[str]) -> torch.Tensor:
        e_case, _ = self._encode(case_texts)
        e_combined, combined_real = self._encode(combined_texts)
        adapted = self.adapt(e_case, e_combined, combined_real)
        return self.head(adapted[:, 0])

    @torch.no_grad()
    def predict_composed(self, case_texts, combined_texts) -> list[str]:
        self.eval()
        logits = self.forward(case_texts, combined_texts)
        return [self.classes[i] for i in logits.argmax(dim=1).tolist()]


class IbrPipeline:
    """Trained IBR model plus its retriever; the evaluation-facing surface."""

    def __init__(self, model: IbrModel, retriever: Retriever):
        self.model = model
        self.retriever = retriever
        self.label_space = model.classes

    def _compose(self, text: str, exclude: Sequence[str] = ()) -> tuple[str, RetrievalResult]:
        result = self.retriever.retrieve(
            text,
            k=self.model.cfg.k_cases,
            threshold=self.model.cfg.similarity_threshold,
            exclude_ids=exclude,
        )
        neighbor_texts = [self.retriever.base.text_of(i) for i in result.ids()]
        composed = compose_input(
            text, neighbor_texts, self.model.cfg.separator_token, self.model.cfg.encoder.max_len
        )
        return composed, result

    def predict(self, texts: Sequence[str]) -> list[str]:
        composed = [self._compose(t)[0] for t in texts]
        return self.model.predict_composed(list(texts), composed)

    def explain(self, text: str) -> dict:
        composed, result = self._compose(text)
        label = self.model.predict_composed([text], [composed])[0]
        return {
            "prediction": label,
            "neighbors": [
                {
                    "id": i,
                    "text": self.retriever.base.text_of(i),
                    "similarity": round(s, 6),
                }
                for i, s in result.neighbors
            ],
        }

    def weight_hash(self) -> str:
        return weight_hash(self.model)


def train_ibr(
    splits: dict[str, DatasetSplit],
    cfg: IbrConfig,
    *,
    epochs: int = 10,
    batch_size: int = 16,
    learning_rate: float = 5e-4,
    seed: int = 0,
    dataset_name: str = "synthetic",
    case_base=None,
) -> tuple[IbrPipeline, EvalReport]:
    """Train on precomposed (case, case+neighbors) pairs.

    The case base is encoded once before the timed epochs and reused as a
    look-up table (callers may pass a cached one); training-time retrieval
    excludes the query's own id to avoid leakage (every exclusion is
    implicit in the composed inputs).
    """
    cfg.validate()
    train, dev, test = splits["train"], splits["dev"], splits["test"]
    classes = sorted(set(train.labels()))
    retr_encoder = resolve_encoder(cfg.retriever)
    base = case_base if case_base is not None else build_case_base(train, retr_encoder)
    retriever = Retriever(retr_encoder, base)

    model = IbrModel(cfg, classes, seed=seed)
    pipeline = IbrPipeline(model, retriever)

    def composed_for(split: DatasetSplit, exclude_self: bool) -> list[str]:
        out = []
        for a in split.arguments:
            composed, _ = pipeline._compose(a.text, exclude=[a.id] if exclude_self else ())
            out.append(composed)
        return out

    train_composed = composed_for(train, exclude_self=True)
    dev_composed = composed_for(dev, exclude_self=False)
    train_texts, train_y = train.texts(), [classes.index(y) for y in train.labels()]

    def loss_of_batch(batch_idx: list[int]) -> torch.Tensor:
        texts = [train_texts[i] for i in batch_idx]
        composed = [train_composed[i] for i in batch_idx]
        logits = model(texts, composed)
        target = torch.tensor([train_y[i] for i in batch_idx], dtype=torch.long)
        return F.cross_entropy(logits, target)

    def dev_predict() -> list[str]:
        return model.predict_composed(dev.texts(), dev_composed)

    settings = TrainSettings(
        epochs=epochs, batch_size=batch_size, learning_rate=learning_rate,
        weight_decay=cfg.weight_decay,
    )
    result: TrainResult = train_loop(
        model, train, dev, classes, settings, seed,
        loss_of_batch=loss_of_batch, dev_predict=dev_predict,
    )

    report = EvalReport(
        task=train.label_space, dataset=dataset_name, method="ibr",
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
