"""Staged fine-tuning across the three task granularities.

Forward curriculum runs binary -> coarse -> fine; the reverse curriculum
runs fine -> coarse -> binary. Each stage starts from the previous stage's
best encoder weights (copied exactly, with hash proof in the lineage log)
and attaches a freshly seeded classification head sized to the stage's
label space. The no-curriculum variant is a single stage and is byte-
equivalent to calling the stage trainer directly.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import torch

from .corpus import DatasetSplit
from .errors import ArchitectureMismatch, MissingStageData
from .evalreport import EvalReport
from .models import weight_hash
from .text import derive_seed

FCL_ORDER = ("binary", "coarse", "fine")
RCL_ORDER = ("fine", "coarse", "binary")


@dataclass
class CurriculumPlan:
    variant: str = "none"  # none | fcl | rcl
    stage_order: tuple[str, ...] | None = None
    epochs_per_stage: tuple[int, ...] = (5, 8, 10)
    batch_size: int = 32
    learning_rate: float = 5e-5
    scheduler: str = "cosine"

    def stages(self, single_task: str | None = None) -> tuple[str, ...]:
        if self.stage_order is not None:
            return tuple(self.stage_order)
        if self.variant == "fcl":
            return FCL_ORDER
        if self.variant == "rcl":
            return RCL_ORDER
        if self.variant == "none":
            if single_task is None:
                raise ValueError("variant 'none' needs the task to run")
            return (single_task,)
        raise ValueError(f"unknown curriculum variant {self.variant!r}")

    def validate(self, single_task: str | None = None) -> None:
        stages = self.stages(single_task)
        # an explicit stage_order may shorten a curriculum but never reorder it
        if self.variant in ("fcl", "rcl"):
            canonical = FCL_ORDER if self.variant == "fcl" else RCL_ORDER
            positions = [canonical.index(s) for s in stages if s in canonical]
            if len(positions) != len(stages) or positions != sorted(positions):
                raise ValueError(
                    f"{self.variant} stages must follow {canonical}, got {stages}"
                )
        if len(self.epochs_per_stage) < len(stages):
            raise ValueError("need one epochs entry per stage")

    @classmethod
    def from_dict(cls, obj: Mapping) -> "CurriculumPlan":
        return cls(
            variant=obj.get("variant", "none"),
            stage_order=tuple(obj["stage_order"]) if obj.get("stage_order") else None,
            epochs_per_stage=tuple(obj.get("epochs_per_stage", (5, 8, 10))),
            batch_size=obj.get("batch_size", 32),
            learning_rate=obj.get("learning_rate", 5e-5),
            scheduler=obj.get("scheduler", "cosine"),
        )


def transfer_weights(
    prev_state: Mapping[str, torch.Tensor],
    model: torch.nn.Module,
    encoder_prefix: str = "encoder.",
) -> torch.nn.Module:
    """Copy encoder weights from a previous stage into a fresh model.

    The head stays at its freshly seeded initialization. Raises
    ArchitectureMismatch naming the first offending layer.
    """
    own = model.state_dict()
    for name, tensor in prev_state.items():
        if not name.startswith(encoder_prefix):
            continue
        if name not in own:
            raise ArchitectureMismatch(f"layer {name!r} missing from the new model")
        if own[name].shape != tensor.shape:
            raise ArchitectureMismatch(
                f"layer {name!r} shape {tuple(tensor.shape)} vs {tuple(own[name].shape)}"
            )
        own[name] = tensor.clone()
    model.load_state_dict(own)
    return model


@dataclass
class StageResult:
    stage: str
    report: EvalReport
    encoder_hash_start: str
    encoder_hash_end: str
    state_dict: dict = field(repr=False, default_factory=dict)


# model_factory(task, classes, head_seed) -> fresh nn.Module with an
# `encoder.`-prefixed submodule; stage_trainer(model, splits, task, epochs,
# batch_size, learning_rate, scheduler, seed) -> EvalReport, training the
# model in place.
ModelFactory = Callable[..., torch.nn.Module]
StageTrainer = Callable[..., EvalReport]


def run_plan(
    plan: CurriculumPlan,
    datasets: Mapping[str, Mapping[str, DatasetSplit]],
    model_factory: ModelFactory,
    stage_trainer: StageTrainer,
    seed: int,
    *,
    single_task: str | None = None,
) -> tuple[list[StageResult], list[dict]]:
    """Run the staged pipeline and return per-stage results plus the lineage
    log proving the encoder hand-off."""
    plan.validate(single_task)
    stages = plan.stages(single_task)
    for stage in stages:
        if stage not in datasets:
            raise MissingStageData(f"no dataset configured for stage {stage!r}")

    results: list[StageResult] = []
    lineage: list[dict] = []
    prev_state: dict | None = None
    for idx, stage in enumerate(stages):
        splits = datasets[stage]
        classes = sorted(set(splits["train"].labels()))
        head_seed = derive_seed("head", seed, idx)
        model = model_factory(task=stage, classes=classes, head_seed=head_seed)
        if prev_state is not None:
            transfer_weights(prev_state, model)
        start_hash = weight_hash(model, prefix="encoder.")
        report = stage_trainer(
            model=model,
            splits=splits,
            task=stage,
            epochs=plan.epochs_per_stage[idx],
            batch_size=plan.batch_size,
            learning_rate=plan.learning_rate,
            scheduler=plan.scheduler,
            seed=seed,
        )
        end_hash = weight_hash(model, prefix="encoder.")
        results.append(
            StageResult(
                stage=stage,
                report=report,
                encoder_hash_start=start_hash,
                encoder_hash_end=end_hash,
                state_dict=copy.deepcopy(model.state_dict()),
            )
        )
        lineage.append(
            {
                "stage": stage,
                "task": stage,
                "encoder_hash_start": start_hash,
                "encoder_hash_end": end_hash,
                "head_seed": head_seed,
            }
        )
        prev_state = results[-1].state_dict
    return results, lineage


def write_lineage(lineage: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(list(lineage), fh, indent=2, sort_keys=True)
