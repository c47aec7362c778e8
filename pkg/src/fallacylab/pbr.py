"""Prototype-based reasoning classifier.

Inputs are encoded, their euclidean distances to a bank of learned prototype
vectors are masked by a fixed prototype-to-class assignment, and a linear
layer over the masked similarities produces class logits. A masked-out
prototype contributes exactly nothing to a class's logit (the +inf-distance
equivalent: similarity exp(-d) is zeroed by the mask). Auxiliary losses pull
examples toward an own-class prototype and prototypes toward same-class
examples. Explanations surface the nearest prototypes with their nearest
training exemplars.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .corpus import DatasetSplit
from .encoders import TinyEncoderConfig, TinyTransformerEncoder, ids_for_text, pad_batch
from .errors import TooFewPrototypes
from .evalreport import EvalReport, per_class_f1, weighted_metrics
from .models import weight_hash
from .training import TrainSettings, class_weights, train_loop

NONE_CLASS = "None"


@dataclass
class PbrConfig:
    num_positive_prototypes: int = 49
    num_negative_prototypes: int = 1
    use_none_class: bool = True
    aux_loss_weight_examples_to_prototypes: float = 1.0
    aux_loss_weight_prototypes_to_examples: float = 1.0
    class_weighting: bool = True
    early_stopping_patience: int = 10
    encoder: TinyEncoderConfig = field(default_factory=TinyEncoderConfig)

    def validate(self) -> None:
        if self.num_positive_prototypes <= 0:
            raise ValueError("need at least one positive prototype")
        if self.num_negative_prototypes < 0:
            raise ValueError("negative prototype count cannot be negative")
        if self.num_negative_prototypes > 0 and not self.use_none_class:
            raise ValueError("negative prototypes require the None class")


def pbr_label_space(task_classes: Sequence[str], cfg: PbrConfig) -> tuple[list[str], str | None]:
    """Full label order plus the class that hosts negative prototypes.

    On binary data the negative label doubles as the None class, so its
    examples train the negative prototype; otherwise a synthetic None class
    is appended when enabled.
    """
    classes = list(task_classes)
    if not cfg.use_none_class:
        return classes, None
    if "not_fallacious" in classes:
        return classes, "not_fallacious"
    return classes + [NONE_CLASS], NONE_CLASS


def assign_mask(
    num_positive: int,
    classes: Sequence[str],
    num_negative: int = 0,
    none_class: str | None = None,
) -> np.ndarray:
    """Fixed [P, C] prototype-to-class assignment.

    Positive prototypes are partitioned as evenly as possible across the
    non-None classes, remainder to the earliest classes in label order;
    negative prototypes all attach to the None class. The mask is built once
    and never learned.
    """
    classes = list(classes)
    positive_classes = [c for c in classes if c != none_class] if none_class else classes
    if not positive_classes:
        raise ValueError("no classes for positive prototypes")
    total = num_positive + num_negative
    if num_positive < len(positive_classes) or total < len(classes):
        raise TooFewPrototypes(
            f"{num_positive} positives + {num_negative} negatives cannot cover "
            f"{len(classes)} classes"
        )
    if num_negative > 0 and none_class is None:
        raise ValueError("negative prototypes need a none_class")
    mask = np.zeros((total, len(classes)), dtype=bool)
    base, rem = divmod(num_positive, len(positive_classes))
    row = 0
    for i, cls in enumerate(positive_classes):
        count = base + (1 if i < rem else 0)
        col = classes.index(cls)
        mask[row : row + count, col] = True
        row += count
    if num_negative:
        mask[row : row + num_negative, classes.index(none_class)] = True
    return mask


@dataclass
class PbrForwardTrace:
    """Everything one forward pass computes, kept for explanation."""

    encoded: torch.Tensor  # [B, D]
    distances: torch.Tensor  # [B, P], euclidean, >= 0
    masked_distances: torch.Tensor  # [B, P, C], +inf where masked out
    logits: torch.Tensor  # [B, C]
    probabilities: torch.Tensor  # [B, C]


class PrototypeLayer(nn.Module):
    """Learned prototype bank with its immutable class mask."""

    def __init__(self, mask: np.ndarray, dim: int, seed: int = 0):
        super().__init__()
        p = mask.shape[0]
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.prototypes = nn.Parameter(torch.randn(p, dim))
        self.register_buffer("mask", torch.from_numpy(mask.astype(np.float32)))

    def init_from_embeddings(self, embeddings: np.ndarray, seed: int = 0) -> None:
        """Draw prototypes from a Gaussian matched to the training-embedding
        mean and covariance; speeds early convergence."""
        rng = np.random.default_rng(seed)
        mean = embeddings.mean(axis=0)
        cov = np.cov(embeddings, rowvar=False)
        cov = np.atleast_2d(cov) + 1e-4 * np.eye(embeddings.shape[1])
        draw = rng.multivariate_normal(
            mean, cov, size=self.prototypes.shape[0], method="svd"
        )
        with torch.no_grad():
            self.prototypes.copy_(torch.from_numpy(draw.astype(np.float32)))

    def distances(self, encoded: torch.Tensor) -> torch.Tensor:
        return torch.cdist(encoded, self.prototypes)


class PbrModel(nn.Module):
    def __init__(self, cfg: PbrConfig, task_classes: Sequence[str], seed: int = 0):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.task_classes = list(task_classes)
        self.classes, self.none_class = pbr_label_space(task_classes, cfg)
        mask = assign_mask(
            cfg.num_positive_prototypes, self.classes, cfg.num_negative_prototypes, self.none_class
        )
        self.encoder = TinyTransformerEncoder(cfg.encoder)
        self.prototype_layer = PrototypeLayer(mask, cfg.encoder.dim, seed=cfg.encoder.seed + 303)
        with torch.random.fork_rng():
            torch.manual_seed(cfg.encoder.seed + 404)
            self.w = nn.Linear(mask.shape[0], len(self.classes))

    def encode_texts_tensor(self, texts: Sequence[str]) -> torch.Tensor:
        cfg = self.cfg.encoder
        id_lists = [ids_for_text(t, cfg.vocab_buckets)[: cfg.max_len] or [2] for t in texts]
        ids, real = pad_batch(id_lists)
        return self.encoder(ids, real)[:, 0]  # first-token pooling

    def forward_encoded(self, encoded: torch.Tensor) -> PbrForwardTrace:
        d = self.prototype_layer.distances(encoded)
        mask = self.prototype_layer.mask  # [P, C]
        masked = d.unsqueeze(-1).expand(-1, -1, mask.shape[1]).clone()
        masked[:, mask == 0] = float("inf")
        similarity = torch.exp(-d)
        effective_w = self.w.weight * mask.t()  # zero out masked contributions
        logits = F.linear(similarity, effective_w, self.w.bias)
        return PbrForwardTrace(
            encoded=encoded,
            distances=d,
            masked_distances=masked,
            logits=logits,
            probabilities=F.softmax(logits, dim=-1),
        )

    def forward(self, texts: Sequence[str]) -> PbrForwardTrace:
        return self.forward_encoded(self.encode_texts_tensor(texts))

    @torch.no_grad()
    def predict(self, texts: Sequence[str]) -> list[str]:
        """Argmax restricted to the task's classes: a synthetic None class
        exists only to host negative prototypes, never as a prediction."""
        self.eval()
        trace = self.forward(texts)
        cols = [self.classes.index(c) for c in self.task_classes]
        picks = trace.logits[:, cols].argmax(dim=1).tolist()
        return [self.task_classes[i] for i in picks]


def pbr_loss(
    trace: PbrForwardTrace,
    targets: torch.Tensor,
    mask: torch.Tensor,
    lambda_examples: float,
    lambda_prototypes: float,
    weights: torch.Tensor | None = None,
) -> torch.Tensor:
    """Class-weighted cross-entropy plus the two proximity terms.

    λ1: mean over examples of the min distance to an own-class prototype.
    λ2: mean over all prototypes of the min distance to a same-class batch
    example; prototypes with no same-class example in the batch contribute 0.
    """
    loss = F.cross_entropy(trace.logits, targets, weight=weights)
    if lambda_examples == 0.0 and lambda_prototypes == 0.0:
        return loss
    d = trace.distances  # [B, P]
    allowed = mask[:, targets].t().bool()  # [B, P]: prototype serves the example's class
    if lambda_examples != 0.0:
        own = d.masked_fill(~allowed, float("inf"))
        loss = loss + lambda_examples * own.min(dim=1).values.mean()
    if lambda_prototypes != 0.0:
        per_proto = d.masked_fill(~allowed, float("inf")).min(dim=0).values  # [P]
        has_example = allowed.any(dim=0)
        contrib = torch.where(has_example, per_proto, torch.zeros_like(per_proto))
        loss = loss + lambda_prototypes * contrib.mean()
    return loss


def nearest_prototypes(
    model: PbrModel,
    query: str | np.ndarray,
    top_n: int = 1,
    *,
    train_embeddings: np.ndarray | None = None,
    train_split: DatasetSplit | None = None,
    exemplars_per_prototype: int = 2,
) -> list[dict]:
    """Prototypes sorted by ascending distance to the input (text or a raw
    embedding), each annotated with its nearest training exemplars."""
    model.eval()
    with torch.no_grad():
        if isinstance(query, np.ndarray):
            encoded = torch.from_numpy(query.astype(np.float32)).unsqueeze(0)
        else:
            encoded = model.encode_texts_tensor([query])
        d = model.prototype_layer.distances(encoded)[0].numpy()
    order = np.argsort(d, kind="stable")[:top_n]
    out = []
    for j in order:
        entry: dict = {"prototype_id": int(j), "distance": float(d[j])}
        if train_embeddings is not None and train_split is not None:
            with torch.no_grad():
                proto = model.prototype_layer.prototypes[j].numpy()
            dist_to_train = np.linalg.norm(train_embeddings - proto, axis=1)
            nearest = np.argsort(dist_to_train, kind="stable")[:exemplars_per_prototype]
            entry["exemplars"] = [
                {
                    "id": train_split.arguments[i].id,
                    "text": train_split.arguments[i].text,
                    "distance": float(dist_to_train[i]),
                }
                for i in nearest
            ]
        out.append(entry)
    return out


def export_prototypes(
    model: PbrModel,
    train_split: DatasetSplit | None = None,
    train_embeddings: np.ndarray | None = None,
) -> tuple[np.ndarray, dict[str, dict[int, int]]]:
    """Raw prototype matrix plus per-class prototype responsibilities.

    A training example's responsible prototype is its nearest own-class
    prototype, so each class's responsibility counts sum to its training
    count. Works on untrained models too (initialization values).
    """
    with torch.no_grad():
        matrix = model.prototype_layer.prototypes.detach().cpu().numpy().copy()
    responsibilities: dict[str, dict[int, int]] = {}
    if train_split is not None and train_embeddings is not None:
        mask = model.prototype_layer.mask.numpy().astype(bool)
        for i, a in enumerate(train_split.arguments):
            label = a.label(train_split.label_space)
            col = model.classes.index(label)
            allowed = np.where(mask[:, col])[0]
            dists = np.linalg.norm(matrix[allowed] - train_embeddings[i], axis=1)
            j = int(allowed[int(np.argmin(dists))])
            responsibilities.setdefault(label, {})
            responsibilities[label][j] = responsibilities[label].get(j, 0) + 1
    return matrix, responsibilities


def write_prototype_export(
    model: PbrModel,
    out_dir,
    train_split: DatasetSplit | None = None,
    train_embeddings: np.ndarray | None = None,
) -> None:
    """Write the dense prototype matrix (.npy) and the per-class prototype
    responsibility table (.json) into a directory."""
    from pathlib import Path
    import json

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    matrix, resp = export_prototypes(model, train_split, train_embeddings)
    np.save(out_dir / "prototypes.npy", matrix)
    table = {
        cls: {str(j): n for j, n in sorted(by_proto.items())}
        for cls, by_proto in resp.items()
    }
    with open(out_dir / "prototype_responsibilities.json", "w", encoding="utf-8") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)


class PbrPipeline:
    """Evaluation-facing surface for a trained PBR model."""

    def __init__(self, model: PbrModel, train_split: DatasetSplit, train_embeddings: np.ndarray):
        self.model = model
        self.train_split = train_split
        self.train_embeddings = train_embeddings
        self.label_space = model.task_classes

    def predict(self, texts: Sequence[str]) -> list[str]:
        return self.model.predict(texts)

    def explain(self, text: str, top_n: int = 1) -> dict:
        label = self.model.predict([text])[0]
        protos = nearest_prototypes(
            self.model, text, top_n,
            train_embeddings=self.train_embeddings, train_split=self.train_split,
        )
        return {"prediction": label, "prototypes": protos}

    def weight_hash(self) -> str:
        return weight_hash(self.model)


def train_pbr(
    splits: dict[str, DatasetSplit],
    cfg: PbrConfig,
    *,
    epochs: int = 10,
    batch_size: int = 16,
    learning_rate: float = 5e-4,
    seed: int = 0,
    dataset_name: str = "synthetic",
) -> tuple[PbrPipeline, EvalReport]:
    cfg.validate()
    train, dev, test = splits["train"], splits["dev"], splits["test"]
    task_classes = sorted(set(train.labels()))
    model = PbrModel(cfg, task_classes, seed=seed)
    classes = model.classes
    mask_before = model.prototype_layer.mask.clone()

    with torch.no_grad():
        model.eval()
        train_emb = model.encode_texts_tensor(train.texts()).numpy()
    model.prototype_layer.init_from_embeddings(train_emb, seed=seed)

    weights = class_weights(train.labels(), classes) if cfg.class_weighting else None
    train_texts = train.texts()
    train_y = [classes.index(y) for y in train.labels()]
    lam1 = cfg.aux_loss_weight_examples_to_prototypes
    lam2 = cfg.aux_loss_weight_prototypes_to_examples

    def loss_of_batch(batch_idx: list[int]) -> torch.Tensor:
        texts = [train_texts[i] for i in batch_idx]
        targets = torch.tensor([train_y[i] for i in batch_idx], dtype=torch.long)
        trace = model(texts)
        return pbr_loss(trace, targets, model.prototype_layer.mask, lam1, lam2, weights)

    def dev_loss() -> float:
        with torch.no_grad():
            trace = model(dev.texts())
            targets = torch.tensor([classes.index(y) for y in dev.labels()], dtype=torch.long)
            return float(pbr_loss(trace, targets, model.prototype_layer.mask, lam1, lam2, weights))

    settings = TrainSettings(
        epochs=epochs, batch_size=batch_size, learning_rate=learning_rate,
        early_stopping_patience=cfg.early_stopping_patience, monitor="loss",
    )
    result = train_loop(
        model, train, dev, classes, settings, seed,
        loss_of_batch=loss_of_batch, dev_predict=model.predict, dev_loss=dev_loss,
    )
    assert torch.equal(mask_before, model.prototype_layer.mask), "mask must stay fixed"

    with torch.no_grad():
        model.eval()
        train_emb = model.encode_texts_tensor(train.texts()).numpy()
    pipeline = PbrPipeline(model, train, train_emb)

    report = EvalReport(
        task=train.label_space, dataset=dataset_name, method="pbr",
        label_space=task_classes, seeds=[seed], epoch_seconds=result.epoch_seconds,
    )
    gold = test.labels()
    preds, explanations = [], []
    for a in test.arguments:
        record = pipeline.explain(a.text)
        preds.append(record["prediction"])
        explanations.append({"id": a.id, **record})
    report.runs.append(weighted_metrics(gold, preds, task_classes))
    report.per_class = per_class_f1(gold, preds, task_classes)
    report.explanations = explanations
    return pipeline, report
