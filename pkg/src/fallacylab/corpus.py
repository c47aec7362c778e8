"""Dataset ingestion, coarse derivation, stratified splitting, and the
propaganda-corpus adaptation.

Input schema (documented bit-exactly): JSON-lines with one object per row
carrying ``id``, ``text``, ``label`` and optionally ``split``; or delimited
text (.csv / .tsv) with a header naming the same columns. ``label`` is
interpreted against the granularity passed to :func:`load_dataset`
(binary: fallacious / not_fallacious; coarse / fine: taxonomy class names).

Propaganda articles use JSON-lines with ``id``, ``sentences`` (list of
strings) and ``labels`` (list of per-sentence technique-name lists).

Every dropped, duplicated, or context-prepended item is recorded in a
provenance log serialized as JSON-lines.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import LabelError, SchemaError, TooFewSamples, UnmappedTechnique
from .taxonomy import BINARY_CLASSES, FallacyTaxonomy
from .text import data_path, derive_seed

SOURCES = ("binary_bench", "logic", "logic_climate", "ptc", "synthetic")
SPLIT_NAMES = ("train", "dev", "test")
DEFAULT_RATIOS = (0.8, 0.1, 0.1)

EVALUATION_ONLY_SOURCES = frozenset({"logic_climate"})


@dataclass(frozen=True)
class Argument:
    """One text item with optional labels at each granularity.

    ``text`` is stored verbatim; no normalization mutates the field.
    """

    id: str
    text: str
    binary_label: str | None = None
    fine_label: str | None = None
    coarse_label: str | None = None
    source: str = "synthetic"
    split: str | None = None
    parent_id: str | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"argument {self.id!r} has empty text")
        if self.source not in SOURCES:
            raise ValueError(f"argument {self.id!r} has unknown source {self.source!r}")

    def label(self, granularity: str) -> str | None:
        if granularity == "binary":
            return self.binary_label
        if granularity == "coarse":
            return self.coarse_label
        if granularity == "fine":
            return self.fine_label
        raise ValueError(f"unknown granularity {granularity!r}")


@dataclass
class DatasetSplit:
    """An ordered, immutable-by-convention collection of arguments."""

    name: str
    arguments: list[Argument]
    label_space: str  # granularity: binary | coarse | fine

    def class_counts(self) -> dict[str, int]:
        return dict(Counter(a.label(self.label_space) for a in self.arguments))

    def labels(self) -> list[str]:
        return [a.label(self.label_space) for a in self.arguments]

    def texts(self) -> list[str]:
        return [a.text for a in self.arguments]

    def __len__(self) -> int:
        return len(self.arguments)


class ProvenanceLog:
    """Append-only audit trail; serializes to JSON-lines."""

    def __init__(self):
        self.records: list[dict] = []

    def record(self, event: str, **fields) -> None:
        self.records.append({"event": event, **fields})

    def count(self, event: str) -> int:
        return sum(1 for r in self.records if r["event"] == event)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# loading


def _validate_label(row_id: str, label: str, granularity: str, taxonomy: FallacyTaxonomy) -> dict:
    if granularity == "binary":
        if label not in BINARY_CLASSES:
            raise LabelError(f"row {row_id!r}: binary label {label!r} not in {BINARY_CLASSES}")
        return {"binary_label": label}
    if granularity == "coarse":
        if label not in taxonomy.coarse_experiment_classes():
            raise LabelError(f"row {row_id!r}: coarse label {label!r} not in taxonomy")
        return {"coarse_label": label}
    if granularity == "fine":
        if not taxonomy.is_known_fine(label):
            raise LabelError(f"row {row_id!r}: fine label {label!r} not in taxonomy")
        return {"fine_label": label}
    raise ValueError(f"unknown granularity {granularity!r}")


def _read_rows(path: Path) -> list[dict]:
    if path.suffix == ".jsonl":
        rows = []
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as e:
                    raise SchemaError(f"{path}: line {i + 1} is not valid JSON") from e
                rows.append(obj)
        return rows
    if path.suffix in (".csv", ".tsv"):
        delim = "\t" if path.suffix == ".tsv" else ","
        with open(path, encoding="utf-8", newline="") as fh:
            return list(csv.DictReader(fh, delimiter=delim))
    raise SchemaError(f"{path}: unsupported extension {path.suffix!r} (use .jsonl/.csv/.tsv)")


def load_dataset(
    path,
    source: str,
    granularity: str,
    *,
    taxonomy: FallacyTaxonomy,
    ratios: Sequence[float] = DEFAULT_RATIOS,
    seed: int = 13,
    provenance: ProvenanceLog | None = None,
) -> dict[str, DatasetSplit]:
    """Load a dataset file into train/dev/test splits.

    Files carrying a ``split`` column for every row keep their official
    splits; otherwise rows are split by stratified sampling with the given
    ratios. Evaluation-only sources never receive a train split: official
    train rows are reassigned to test (with a provenance record) and
    split-less files land entirely in test.
    """
    path = Path(path)
    if source not in SOURCES:
        raise ValueError(f"unknown source {source!r}")
    if not path.exists():
        raise SchemaError(f"dataset file {path} does not exist")
    rows = _read_rows(path)
    if not rows:
        raise SchemaError(f"{path}: file contains no rows")
    provenance = provenance if provenance is not None else ProvenanceLog()

    arguments: list[Argument] = []
    has_split = all(r.get("split") for r in rows)
    for i, row in enumerate(rows):
        missing = [c for c in ("id", "text", "label") if not row.get(c)]
        if missing:
            raise SchemaError(f"{path}: row {i + 1} missing columns {missing}")
        label_fields = _validate_label(str(row["id"]), row["label"], granularity, taxonomy)
        split = row.get("split") if has_split else None
        if split is not None and split not in SPLIT_NAMES:
            raise SchemaError(f"{path}: row {i + 1} has unknown split {split!r}")
        if source in EVALUATION_ONLY_SOURCES and split == "train":
            provenance.record("evaluation_only_train_reassigned", id=str(row["id"]), source=source)
            split = "test"
        arguments.append(
            Argument(id=str(row["id"]), text=row["text"], source=source, split=split, **label_fields)
        )

    seen: set[str] = set()
    for a in arguments:
        if a.id in seen:
            raise SchemaError(f"{path}: duplicate id {a.id!r}")
        seen.add(a.id)

    if has_split:
        splits = {
            name: DatasetSplit(name, [a for a in arguments if a.split == name], granularity)
            for name in SPLIT_NAMES
        }
        return {k: v for k, v in splits.items() if v.arguments}
    if source in EVALUATION_ONLY_SOURCES:
        stamped = [replace(a, split="test") for a in arguments]
        provenance.record("evaluation_only_all_to_test", source=source, count=len(stamped))
        return {"test": DatasetSplit("test", stamped, granularity)}
    return stratified_split(arguments, ratios, seed, granularity)


# ---------------------------------------------------------------------------
# coarse derivation


def _underrepresented_coarse(counts_by_coarse: Mapping[str, int], n_coarse: int) -> set[str]:
    total = sum(counts_by_coarse.values())
    share = total / n_coarse if n_coarse else 0.0
    return {c for c, n in counts_by_coarse.items() if n < share}


def derive_coarse(
    fine_split: DatasetSplit,
    taxonomy: FallacyTaxonomy,
    *,
    min_class_size: int = 20,
    provenance: ProvenanceLog | None = None,
    drop_classes: set[str] | None = None,
) -> DatasetSplit:
    """Derive a coarse-labeled split from a fine-labeled one.

    Coarse-excluded fine classes are dropped. Fine classes with at most
    ``min_class_size`` samples are dropped unless their coarse parent is
    under-represented, i.e. its mappable total falls below the uniform share
    (grand total / number of coarse classes) computed before any drops.
    Passing ``drop_classes`` overrides the rule with a precomputed set, which
    lets callers apply one decision consistently across several splits.
    """
    if fine_split.label_space != "fine":
        raise ValueError("derive_coarse expects a fine-labeled split")
    provenance = provenance if provenance is not None else ProvenanceLog()

    if drop_classes is None:
        drop_classes = coarse_drop_set(
            Counter(a.fine_label for a in fine_split.arguments), taxonomy, min_class_size
        )

    kept: list[Argument] = []
    for a in fine_split.arguments:
        if taxonomy.is_coarse_excluded(a.fine_label):
            provenance.record("dropped_coarse_excluded", id=a.id, fine=a.fine_label)
            continue
        if a.fine_label in drop_classes:
            provenance.record("dropped_small_fine_class", id=a.id, fine=a.fine_label)
            continue
        kept.append(replace(a, coarse_label=taxonomy.map_fine_to_coarse(a.fine_label)))
    return DatasetSplit(fine_split.name, kept, "coarse")


def coarse_drop_set(
    fine_counts: Mapping[str, int], taxonomy: FallacyTaxonomy, min_class_size: int = 20
) -> set[str]:
    """Fine classes removed by the small-class rule for the given counts."""
    coarse_totals: Counter[str] = Counter()
    for fine, n in fine_counts.items():
        if not taxonomy.is_coarse_excluded(fine):
            coarse_totals[taxonomy.map_fine_to_coarse(fine)] += n
    under = _underrepresented_coarse(coarse_totals, len(taxonomy.coarse_experiment_classes()))
    dropped = set()
    for fine, n in fine_counts.items():
        if taxonomy.is_coarse_excluded(fine):
            continue
        if n <= min_class_size and taxonomy.map_fine_to_coarse(fine) not in under:
            dropped.add(fine)
    return dropped


def derive_coarse_splits(
    splits: Mapping[str, DatasetSplit],
    taxonomy: FallacyTaxonomy,
    *,
    min_class_size: int = 20,
    provenance: ProvenanceLog | None = None,
) -> dict[str, DatasetSplit]:
    """Apply one drop decision, computed over all splits, to each split."""
    union: Counter[str] = Counter()
    for s in splits.values():
        union.update(a.fine_label for a in s.arguments)
    drops = coarse_drop_set(union, taxonomy, min_class_size)
    return {
        name: derive_coarse(s, taxonomy, min_class_size=min_class_size,
                            provenance=provenance, drop_classes=drops)
        for name, s in splits.items()
    }


# ---------------------------------------------------------------------------
# propaganda corpus adaptation


def load_ptc_mapping(path=None) -> dict[str, str]:
    """Technique -> fine-class table from the editable TSV."""
    handle = data_path("ptc_to_fine_v1.tsv") if path is None else path
    text = handle.read_text("utf-8") if hasattr(handle, "read_text") else open(handle, encoding="utf-8").read()
    mapping = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        technique, fine = line.split("\t")
        mapping[technique] = fine
    return mapping


def adapt_ptc(
    articles: Sequence[tuple[Sequence[str], Sequence[Sequence[str]]]],
    mapping: Mapping[str, str],
    taxonomy: FallacyTaxonomy,
    *,
    provenance: ProvenanceLog | None = None,
) -> list[Argument]:
    """Adapt propaganda articles into coarse-labeled training arguments.

    A sentence with m technique labels emits m arguments. The preceding
    sentence is prepended as context only when its technique set is empty or
    a subset of {current technique}; the provenance log also counts the
    stricter unlabeled-only variant. Techniques map to fine classes through
    ``mapping`` and on to coarse classes through the taxonomy; items whose
    fine class is coarse-excluded are dropped with a record. The caller is
    expected to feed only the corpus's train portion.
    """
    provenance = provenance if provenance is not None else ProvenanceLog()
    out: list[Argument] = []
    prepended = prepended_unlabeled_only = 0
    for art_idx, (sentences, label_sets) in enumerate(articles):
        if len(sentences) != len(label_sets):
            raise SchemaError(
                f"article {art_idx}: {len(sentences)} sentences vs {len(label_sets)} label sets"
            )
        for i, (sentence, techniques) in enumerate(zip(sentences, label_sets)):
            for j, technique in enumerate(techniques):
                if technique not in mapping:
                    raise UnmappedTechnique(f"no mapping for PTC technique {technique!r}")
                fine = mapping[technique]
                if taxonomy.is_coarse_excluded(fine):
                    provenance.record(
                        "ptc_dropped_coarse_excluded", article=art_idx, sentence=i, fine=fine
                    )
                    continue
                coarse = taxonomy.map_fine_to_coarse(fine)
                prev_labels = set(label_sets[i - 1]) if i > 0 else None
                text = sentence
                if prev_labels is not None and prev_labels <= {technique}:
                    text = sentences[i - 1] + " " + sentence
                    prepended += 1
                    if not prev_labels:
                        prepended_unlabeled_only += 1
                    provenance.record(
                        "ptc_context_prepended", article=art_idx, sentence=i, technique=technique
                    )
                if len(techniques) > 1:
                    provenance.record(
                        "ptc_duplicated", article=art_idx, sentence=i, technique=technique
                    )
                out.append(
                    Argument(
                        id=f"ptc-{art_idx}-s{i}-l{j}",
                        text=text,
                        fine_label=fine,
                        coarse_label=coarse,
                        source="ptc",
                        split="train",
                    )
                )
    provenance.record(
        "ptc_context_rule_counts",
        prepended=prepended,
        prepended_if_unlabeled_only=prepended_unlabeled_only,
    )
    return out


# ---------------------------------------------------------------------------
# stratified splitting


def _largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    quotas = [n * r for r in ratios]
    base = [int(q) for q in quotas]
    remainder = n - sum(base)
    order = sorted(range(len(ratios)), key=lambda s: (-(quotas[s] - base[s]), s))
    for s in order[:remainder]:
        base[s] += 1
    return base


def stratified_split(
    arguments: Sequence[Argument],
    ratios: Sequence[float],
    seed: int,
    granularity: str,
    split_names: Sequence[str] = SPLIT_NAMES,
) -> dict[str, DatasetSplit]:
    """Split with per-class proportions preserved within one item.

    Per class, items are shuffled with a seed derived from (seed, class) and
    sliced by largest-remainder allocation, so results are deterministic.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios {ratios} do not sum to 1")
    if len(ratios) != len(split_names):
        raise ValueError("need one ratio per split name")
    by_class: dict[str, list[Argument]] = {}
    for a in arguments:
        label = a.label(granularity)
        if label is None:
            raise ValueError(f"argument {a.id!r} lacks a {granularity} label")
        by_class.setdefault(label, []).append(a)

    buckets: dict[str, list[Argument]] = {name: [] for name in split_names}
    for label in sorted(by_class):
        items = by_class[label]
        if len(items) < len(split_names):
            raise TooFewSamples(
                f"class {label!r} has {len(items)} items for {len(split_names)} splits"
            )
        rng = np.random.default_rng(derive_seed(seed, label))
        order = rng.permutation(len(items))
        shuffled = [items[i] for i in order]
        counts = _largest_remainder(len(items), ratios)
        start = 0
        for name, c in zip(split_names, counts):
            buckets[name].extend(
                replace(a, split=name) for a in shuffled[start : start + c]
            )
            start += c
    return {
        name: DatasetSplit(name, items, granularity) for name, items in buckets.items()
    }


# ---------------------------------------------------------------------------
# serialization


def write_split(split: DatasetSplit, path) -> None:
    """Serialize a split as JSON-lines in the corpus schema."""
    with open(path, "w", encoding="utf-8") as fh:
        for a in split.arguments:
            row = {
                "id": a.id,
                "text": a.text,
                "label": a.label(split.label_space),
                "split": split.name,
                "source": a.source,
            }
            if a.parent_id is not None:
                row["parent_id"] = a.parent_id
            fh.write(json.dumps(row, sort_keys=True) + "\n")
