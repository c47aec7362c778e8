"""Seeded mini-batch training loop with best-dev checkpoint retention."""

from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .corpus import DatasetSplit
from .evalreport import RunMetrics, weighted_metrics
from .text import derive_seed


@dataclass
class TrainSettings:
    epochs: int = 10
    batch_size: int = 16
    learning_rate: float = 5e-4
    weight_decay: float = 0.0
    scheduler: str = "none"  # none | cosine
    early_stopping_patience: int | None = None
    monitor: str = "f1"  # f1 | loss


@dataclass
class TrainResult:
    best_state: dict
    epoch_seconds: list[float] = field(default_factory=list)
    dev_history: list[float] = field(default_factory=list)
    best_epoch: int = 0


def iterate_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def class_weights(labels: Sequence[str], classes: Sequence[str]) -> torch.Tensor:
    """Inverse-frequency weights normalized to mean 1 over observed classes;
    classes without examples get weight 1 (they never appear as targets)."""
    counts = {c: 0 for c in classes}
    for y in labels:
        counts[y] += 1
    observed = [c for c in classes if counts[c] > 0]
    n, k = len(labels), len(observed)
    raw = {c: n / (k * counts[c]) for c in observed}
    mean = sum(raw.values()) / k
    return torch.tensor(
        [raw[c] / mean if c in raw else 1.0 for c in classes], dtype=torch.float32
    )


def train_loop(
    model: torch.nn.Module,
    train: DatasetSplit,
    dev: DatasetSplit,
    classes: Sequence[str],
    settings: TrainSettings,
    seed: int,
    *,
    loss_of_batch: Callable[[list[int]], torch.Tensor],
    dev_predict: Callable[[], list[str]],
    dev_loss: Callable[[], float] | None = None,
) -> TrainResult:
    """Generic loop: seeded shuffling, optional cosine schedule, best-dev
    selection by weighted F1 (accuracy as tie-break) or dev loss."""
    torch.manual_seed(derive_seed("train", seed))
    rng = np.random.default_rng(derive_seed("batches", seed))
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=settings.learning_rate, weight_decay=settings.weight_decay
    )
    scheduler = None
    if settings.scheduler == "cosine":
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=settings.epochs)

    gold_dev = dev.labels()
    best_key: tuple | None = None
    best_state = copy.deepcopy(model.state_dict())
    result = TrainResult(best_state=best_state)
    stale = 0
    for epoch in range(settings.epochs):
        tic = time.perf_counter()
        model.train()
        for batch in iterate_batches(len(train), settings.batch_size, rng):
            optimizer.zero_grad()
            loss = loss_of_batch(list(batch))
            loss.backward()
            optimizer.step()
        if scheduler is not None:
            scheduler.step()
        result.epoch_seconds.append(time.perf_counter() - tic)

        model.eval()
        if settings.monitor == "loss":
            assert dev_loss is not None
            score = dev_loss()
            key = (-score,)
            result.dev_history.append(score)
        else:
            metrics: RunMetrics = weighted_metrics(gold_dev, dev_predict(), classes)
            key = (metrics.f1, metrics.accuracy)
            result.dev_history.append(metrics.f1)
        if best_key is None or key > best_key:
            best_key = key
            result.best_state = copy.deepcopy(model.state_dict())
            result.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if settings.early_stopping_patience is not None and stale >= settings.early_stopping_patience:
                break
    model.load_state_dict(result.best_state)
    return result
