"""Three-level fallacy taxonomy and the fine-to-coarse mapping rules.

The taxonomy ships as a versioned tab-separated data file with columns
(fine_name, coarse_name, flag). The flag takes one of three values:

* ``included``  - fine class used in experiments and mapped for coarse derivation
* ``fine_only`` - used in fine-grained experiments, excluded from coarse derivation
* ``excluded``  - present so future data can attach, unused in experiments

Instances are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import ExcludedClass, UnknownClass
from .text import data_path

GRANULARITIES = ("binary", "coarse", "fine")

BINARY_CLASSES = ("fallacious", "not_fallacious")

COARSE_CLASSES = (
    "Fallacy of Ambiguity",
    "Fallacy of Defective Induction",
    "Fallacy of Presumption",
    "Fallacy of Relevance",
)

_FLAGS = ("included", "fine_only", "excluded")


@dataclass(frozen=True)
class FallacyClass:
    """One node of the taxonomy; names are unique within a granularity."""

    name: str
    granularity: str
    included_in_experiments: bool = True


class FallacyTaxonomy:
    """Fine -> coarse mapping with per-class inclusion flags."""

    def __init__(self, rows: Iterable[tuple[str, str, str]]):
        self._parent: dict[str, str] = {}
        self._flag: dict[str, str] = {}
        for fine, coarse, flag in rows:
            if flag not in _FLAGS:
                raise ValueError(f"unknown taxonomy flag {flag!r} for {fine!r}")
            if coarse not in COARSE_CLASSES:
                raise ValueError(f"unknown coarse class {coarse!r} for {fine!r}")
            if fine in self._parent:
                raise ValueError(f"duplicate fine class {fine!r}")
            self._parent[fine] = coarse
            self._flag[fine] = flag
        for coarse in COARSE_CLASSES:
            if coarse not in self._parent.values():
                raise ValueError(f"coarse class {coarse!r} has no fine children")

    @classmethod
    def load(cls, path=None) -> "FallacyTaxonomy":
        """Load from a taxonomy TSV; defaults to the packaged v1 file."""
        handle = data_path("taxonomy_v1.tsv") if path is None else path
        rows = []
        text = handle.read_text("utf-8") if hasattr(handle, "read_text") else open(handle, encoding="utf-8").read()
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"taxonomy rows need 3 tab-separated columns, got {line!r}")
            rows.append((parts[0], parts[1], parts[2]))
        return cls(rows)

    # -- class sets ----------------------------------------------------

    @property
    def coarse_classes(self) -> frozenset[FallacyClass]:
        return frozenset(FallacyClass(c, "coarse") for c in COARSE_CLASSES)

    @property
    def fine_classes(self) -> frozenset[FallacyClass]:
        return frozenset(
            FallacyClass(name, "fine", self._flag[name] != "excluded")
            for name in self._parent
        )

    def fine_experiment_classes(self) -> list[str]:
        """The fine classes used in experiments, in alphabetical label order."""
        return sorted(n for n, f in self._flag.items() if f != "excluded")

    def coarse_experiment_classes(self) -> list[str]:
        """The four coarse classes in the fixed alphabetical label order."""
        return list(COARSE_CLASSES)

    def label_space(self, granularity: str) -> list[str]:
        if granularity == "binary":
            return list(BINARY_CLASSES)
        if granularity == "coarse":
            return self.coarse_experiment_classes()
        if granularity == "fine":
            return self.fine_experiment_classes()
        raise ValueError(f"unknown granularity {granularity!r}")

    def label_index(self, granularity: str, name: str) -> int:
        space = self.label_space(granularity)
        try:
            return space.index(name)
        except ValueError:
            raise UnknownClass(f"{name!r} is not a {granularity} experiment class") from None

    # -- mapping -------------------------------------------------------

    def is_known_fine(self, fine: str) -> bool:
        return fine in self._parent

    def is_coarse_excluded(self, fine: str) -> bool:
        """True when the class cannot participate in coarse derivation."""
        if fine not in self._flag:
            raise UnknownClass(f"unknown fine class {fine!r}")
        return self._flag[fine] != "included"

    def coarse_parent(self, fine: str) -> str:
        """Raw parent lookup, valid for every fine class in the data file."""
        if fine not in self._parent:
            raise UnknownClass(f"unknown fine class {fine!r}")
        return self._parent[fine]

    def map_fine_to_coarse(self, fine: str) -> str:
        """Map an included fine class to its unique coarse parent."""
        if fine not in self._parent:
            raise UnknownClass(f"unknown fine class {fine!r}")
        if self._flag[fine] != "included":
            raise ExcludedClass(f"{fine!r} is excluded from coarse-grained experiments")
        return self._parent[fine]
