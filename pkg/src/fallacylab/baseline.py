"""Plain encoder + classification head fine-tuning, and the stage adapters
that let the curriculum wrap the baseline and PBR trainers."""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn.functional as F

from .corpus import DatasetSplit
from .encoders import TinyEncoderConfig
from .errors import UnsupportedMethod
from .evalreport import EvalReport, per_class_f1, weighted_metrics
from .models import EncoderClassifier, weight_hash
from .pbr import PbrConfig, PbrModel, pbr_loss
from .training import TrainSettings, class_weights, train_loop


class BaselinePipeline:
    def __init__(self, model: EncoderClassifier):
        self.model = model
        self.label_space = model.classes

    def predict(self, texts: Sequence[str]) -> list[str]:
        return self.model.predict(texts)

    def explain(self, text: str) -> dict:
        raise UnsupportedMethod("the plain baseline has no native explanations")

    def weight_hash(self) -> str:
        return weight_hash(self.model)


def fit_classifier(
    model: EncoderClassifier,
    splits: dict[str, DatasetSplit],
    settings: TrainSettings,
    seed: int,
):
    """Train an EncoderClassifier in place; returns the loop result."""
    train, dev = splits["train"], splits["dev"]
    classes = model.classes
    texts, ys = train.texts(), [classes.index(y) for y in train.labels()]

    def loss_of_batch(batch_idx: list[int]) -> torch.Tensor:
        logits = model([texts[i] for i in batch_idx])
        target = torch.tensor([ys[i] for i in batch_idx], dtype=torch.long)
        return F.cross_entropy(logits, target)

    return train_loop(
        model, train, dev, classes, settings, seed,
        loss_of_batch=loss_of_batch, dev_predict=lambda: model.predict(dev.texts()),
    )


def train_baseline(
    splits: dict[str, DatasetSplit],
    encoder_cfg: TinyEncoderConfig,
    *,
    epochs: int = 10,
    batch_size: int = 16,
    learning_rate: float = 5e-4,
    scheduler: str = "none",
    seed: int = 0,
    head_seed: int | None = None,
    dataset_name: str = "synthetic",
) -> tuple[BaselinePipeline, EvalReport]:
    train, test = splits["train"], splits["test"]
    classes = sorted(set(train.labels()))
    model = EncoderClassifier(encoder_cfg, classes, head_seed=head_seed if head_seed is not None else seed + 1)
    settings = TrainSettings(
        epochs=epochs, batch_size=batch_size, learning_rate=learning_rate, scheduler=scheduler
    )
    result = fit_classifier(model, splits, settings, seed)
    pipeline = BaselinePipeline(model)
    report = EvalReport(
        task=train.label_space, dataset=dataset_name, method="baseline",
        label_space=classes, seeds=[seed], epoch_seconds=result.epoch_seconds,
    )
    gold, preds = test.labels(), pipeline.predict(test.texts())
    report.runs.append(weighted_metrics(gold, preds, classes))
    report.per_class = per_class_f1(gold, preds, classes)
    return pipeline, report


# ---------------------------------------------------------------------------
# curriculum adapters


def baseline_model_factory(encoder_cfg: TinyEncoderConfig):
    def factory(task: str, classes: Sequence[str], head_seed: int) -> EncoderClassifier:
        return EncoderClassifier(encoder_cfg, classes, head_seed=head_seed)

    return factory


def baseline_stage_trainer(
    model: EncoderClassifier,
    splits: dict[str, DatasetSplit],
    task: str,
    epochs: int,
    batch_size: int,
    learning_rate: float,
    scheduler: str,
    seed: int,
    dataset_name: str = "synthetic",
) -> EvalReport:
    settings = TrainSettings(
        epochs=epochs, batch_size=batch_size, learning_rate=learning_rate, scheduler=scheduler
    )
    result = fit_classifier(model, splits, settings, seed)
    test = splits["test"]
    classes = model.classes
    report = EvalReport(
        task=task, dataset=dataset_name, method="baseline",
        label_space=classes, seeds=[seed], epoch_seconds=result.epoch_seconds,
    )
    gold, preds = test.labels(), model.predict(test.texts())
    report.runs.append(weighted_metrics(gold, preds, classes))
    report.per_class = per_class_f1(gold, preds, classes)
    return report


def pbr_model_factory(cfg: PbrConfig):
    def factory(task: str, classes: Sequence[str], head_seed: int) -> PbrModel:
        stage_cfg = PbrConfig(
            num_positive_prototypes=cfg.num_positive_prototypes,
            num_negative_prototypes=cfg.num_negative_prototypes,
            use_none_class=cfg.use_none_class,
            aux_loss_weight_examples_to_prototypes=cfg.aux_loss_weight_examples_to_prototypes,
            aux_loss_weight_prototypes_to_examples=cfg.aux_loss_weight_prototypes_to_examples,
            class_weighting=cfg.class_weighting,
            early_stopping_patience=cfg.early_stopping_patience,
            encoder=cfg.encoder,
        )
        return PbrModel(stage_cfg, classes, seed=head_seed)

    return factory


def pbr_stage_trainer(
    model: PbrModel,
    splits: dict[str, DatasetSplit],
    task: str,
    epochs: int,
    batch_size: int,
    learning_rate: float,
    scheduler: str,
    seed: int,
    dataset_name: str = "synthetic",
) -> EvalReport:
    train, dev, test = splits["train"], splits["dev"], splits["test"]
    classes = model.classes
    weights = class_weights(train.labels(), classes) if model.cfg.class_weighting else None
    texts = train.texts()
    ys = [classes.index(y) for y in train.labels()]
    lam1 = model.cfg.aux_loss_weight_examples_to_prototypes
    lam2 = model.cfg.aux_loss_weight_prototypes_to_examples

    def loss_of_batch(batch_idx: list[int]) -> torch.Tensor:
        trace = model([texts[i] for i in batch_idx])
        target = torch.tensor([ys[i] for i in batch_idx], dtype=torch.long)
        return pbr_loss(trace, target, model.prototype_layer.mask, lam1, lam2, weights)

    def dev_loss() -> float:
        with torch.no_grad():
            trace = model(dev.texts())
            target = torch.tensor([classes.index(y) for y in dev.labels()], dtype=torch.long)
            return float(pbr_loss(trace, target, model.prototype_layer.mask, lam1, lam2, weights))

    settings = TrainSettings(
        epochs=epochs, batch_size=batch_size, learning_rate=learning_rate,
        scheduler=scheduler, monitor="loss",
        early_stopping_patience=model.cfg.early_stopping_patience,
    )
    result = train_loop(
        model, train, dev, classes, settings, seed,
        loss_of_batch=loss_of_batch, dev_predict=model.predict, dev_loss=dev_loss,
    )
    report = EvalReport(
        task=task, dataset=dataset_name, method="pbr",
        label_space=model.task_classes, seeds=[seed], epoch_seconds=result.epoch_seconds,
    )
    gold, preds = test.labels(), model.predict(test.texts())
    report.runs.append(weighted_metrics(gold, preds, model.task_classes))
    report.per_class = per_class_f1(gold, preds, model.task_classes)
    return report
