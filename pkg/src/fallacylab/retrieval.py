"""Exact top-k cosine retrieval over a precomputed case base.

The case base is a look-up table of unit-normalized training-argument
vectors built once and reused across epochs. Retrieval is an exact scan:
bases here stay in the tens of thousands, where determinism and correctness
beat index structures. Persistence uses a small binary blob (JSON header +
raw float32 rows) plus a JSON sidecar of ids/labels/texts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Argument, DatasetSplit
from .encoders import SentenceEncoder
from .errors import DuplicateId, EncoderFailure

_MAGIC = b"FLCB1\n"


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero vector")
    return (vectors / norms).astype(np.float32)


@dataclass
class CaseBase:
    """Encoded training arguments; vectors are L2-normalized so dot = cosine."""

    ids: tuple[str, ...]
    labels: tuple[str | None, ...]
    vectors: np.ndarray  # [N, D] float32, unit rows
    fingerprint: str
    texts: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            dupes = sorted({i for i in self.ids if list(self.ids).count(i) > 1})
            raise DuplicateId(f"duplicate case ids: {dupes[:5]}")
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.ids):
            raise ValueError("vectors must be [len(ids), dim]")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def embedding_dim(self) -> int:
        return self.vectors.shape[1]

    def text_of(self, case_id: str) -> str:
        if self.texts is None:
            raise ValueError("case base was built without texts")
        return self.texts[self.ids.index(case_id)]

    def label_of(self, case_id: str) -> str | None:
        return self.labels[self.ids.index(case_id)]

    @classmethod
    def from_vectors(
        cls,
        ids: Sequence[str],
        labels: Sequence[str | None],
        vectors: np.ndarray,
        fingerprint: str = "raw",
        texts: Sequence[str] | None = None,
    ) -> "CaseBase":
        return cls(
            tuple(ids),
            tuple(labels),
            _unit_rows(np.asarray(vectors, dtype=np.float32)),
            fingerprint,
            tuple(texts) if texts is not None else None,
        )

    def save(self, path) -> None:
        path = Path(path)
        header = {
            "fingerprint": self.fingerprint,
            "dim": int(self.embedding_dim),
            "count": len(self.ids),
            "dtype": "float32",
        }
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
            fh.write(np.ascontiguousarray(self.vectors).tobytes())
        sidecar = {"ids": list(self.ids), "labels": list(self.labels)}
        if self.texts is not None:
            sidecar["texts"] = list(self.texts)
        with open(path.with_suffix(path.suffix + ".meta.json"), "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "CaseBase":
        path = Path(path)
        with open(path, "rb") as fh:
            magic = fh.read(len(_MAGIC))
            if magic != _MAGIC:
                raise ValueError(f"{path} is not a case-base blob")
            header = json.loads(fh.readline().decode("utf-8"))
            raw = fh.read(header["count"] * header["dim"] * 4)
        vectors = np.frombuffer(raw, dtype=np.float32).reshape(header["count"], header["dim"]).copy()
        with open(path.with_suffix(path.suffix + ".meta.json"), encoding="utf-8") as fh:
            sidecar = json.load(fh)
        return cls(
            tuple(sidecar["ids"]),
            tuple(sidecar["labels"]),
            vectors,
            header["fingerprint"],
            tuple(sidecar["texts"]) if "texts" in sidecar else None,
        )


@dataclass
class RetrievalResult:
    """Neighbors in non-increasing similarity order, all above threshold."""

    neighbors: list[tuple[str, float]]
    k_requested: int
    threshold: float

    def ids(self) -> list[str]:
        return [i for i, _ in self.neighbors]

    def __len__(self) -> int:
        return len(self.neighbors)


def build_case_base(
    split: DatasetSplit, encoder: SentenceEncoder, store_texts: bool = True
) -> CaseBase:
    """Encode every training argument once into a reusable look-up table."""
    if not split.arguments:
        raise ValueError("cannot build a case base from an empty split")
    try:
        vectors = encoder.encode(split.texts())
    except EncoderFailure:
        raise
    except Exception as e:
        raise EncoderFailure(f"case-base encoding failed: {e}") from e
    return CaseBase.from_vectors(
        ids=[a.id for a in split.arguments],
        labels=split.labels(),
        vectors=vectors,
        fingerprint=encoder.fingerprint,
        texts=split.texts() if store_texts else None,
    )


def top_k(
    base: CaseBase,
    query_vector: np.ndarray,
    k: int,
    threshold: float = 0.5,
    exclude_ids: Iterable[str] = (),
    filter_order: str = "before_topk",
) -> RetrievalResult:
    """Exact top-k by cosine with a similarity floor.

    Ties break by ascending id. ``filter_order`` selects whether the
    threshold applies before or after top-k truncation; the two orders are
    provably equivalent here (ranking and filtering use the same score) and
    both are kept only to make that explicit.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    q = np.asarray(query_vector, dtype=np.float32)
    q = q / np.linalg.norm(q)
    sims = base.vectors @ q
    excluded = set(exclude_ids)
    candidates = [
        (base.ids[i], float(sims[i])) for i in range(len(base)) if base.ids[i] not in excluded
    ]
    if filter_order == "before_topk":
        candidates = [(i, s) for i, s in candidates if s >= threshold]
        candidates.sort(key=lambda t: (-t[1], t[0]))
        picked = candidates[:k]
    elif filter_order == "after_topk":
        candidates.sort(key=lambda t: (-t[1], t[0]))
        picked = [(i, s) for i, s in candidates[:k] if s >= threshold]
    else:
        raise ValueError(f"unknown filter_order {filter_order!r}")
    return RetrievalResult(picked, k_requested=k, threshold=threshold)


class Retriever:
    """Bundles a sentence encoder with a case base."""

    def __init__(self, encoder: SentenceEncoder, base: CaseBase):
        if encoder.fingerprint != base.fingerprint:
            raise ValueError(
                f"encoder {encoder.fingerprint!r} does not match case base {base.fingerprint!r}"
            )
        self.encoder = encoder
        self.base = base

    def retrieve(
        self,
        query: Argument | str,
        k: int,
        threshold: float = 0.5,
        exclude_ids: Iterable[str] = (),
        filter_order: str = "before_topk",
    ) -> RetrievalResult:
        text = query.text if isinstance(query, Argument) else query
        try:
            vec = self.encoder.encode([text])[0]
        except EncoderFailure:
            raise
        except Exception as e:
            raise EncoderFailure(f"query encoding failed: {e}") from e
        return top_k(self.base, vec, k, threshold, exclude_ids, filter_order)
