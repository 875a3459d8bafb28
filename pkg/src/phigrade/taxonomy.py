"""Category vocabulary and category -> sensitivity level mapping.

The vocabulary is loaded from a YAML document (see ``data/taxonomy.yaml``) so
that the grading table can be revised without touching code.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from enum import IntEnum
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import yaml

TOP_LEVEL_GROUPS = (
    "personal attribute",
    "health status",
    "medical application",
    "medical payment",
    "health resource",
    "public health",
)

DEFAULT_TAXONOMY_PATH = Path(str(resources.files("phigrade") / "data" / "taxonomy.yaml"))


class TaxonomyError(ValueError):
    pass


class SensitivityLevel(IntEnum):
    """Five ascending sensitivity levels; ``SensitivityLevel(6)`` raises ValueError."""

    PUBLIC = 1
    GENERAL = 2
    RELATIVELY_HIGH = 3
    HIGH = 4
    SPECIAL_DISEASE = 5


_DASHES = re.compile(r"[‐-―−－]")
_SPACES = re.compile(r"\s+")
_SEPARATOR_PADDING = re.compile(r"\s*([/-])\s*")


def normalize(text: str) -> str:
    """Matching key: NFKC width folding, dash folding, trimmed, collapsed, case-folded."""
    text = unicodedata.normalize("NFKC", text)
    text = _DASHES.sub("-", text)
    text = _SPACES.sub(" ", text).strip()
    text = _SEPARATOR_PADDING.sub(r"\1", text)
    return text.casefold()


@dataclass(frozen=True)
class Category:
    top_level: str
    subcategory: str
    leaf: str  # canonical ASCII slug
    label: str = ""


@dataclass(frozen=True)
class TaxonomyEntry:
    category: Category
    default_level: SensitivityLevel
    notes: str = ""


@dataclass(frozen=True)
class Taxonomy:
    """Immutable closed vocabulary. Iterates over entries in document order."""

    entries: tuple[TaxonomyEntry, ...]
    version: str = ""
    _index: Mapping[str, TaxonomyEntry] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        for entry in self.entries:
            key = normalize(entry.category.leaf)
            if key in index:
                raise TaxonomyError(f"duplicate leaf {entry.category.leaf!r}")
            index[key] = entry
        object.__setattr__(self, "_index", index)

    def __iter__(self) -> Iterator[TaxonomyEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def slugs(self) -> list[str]:
        return [e.category.leaf for e in self.entries]

    def is_compatible(self, candidate_leaf) -> bool:
        return isinstance(candidate_leaf, str) and normalize(candidate_leaf) in self._index

    def lookup(self, candidate_leaf: str) -> TaxonomyEntry:
        try:
            return self._index[normalize(candidate_leaf)]
        except (KeyError, TypeError):
            raise TaxonomyError(f"unknown category {candidate_leaf!r}") from None

    def canonical(self, candidate_leaf: str) -> str:
        return self.lookup(candidate_leaf).category.leaf

    def default_level(self, category: Category | str) -> SensitivityLevel:
        leaf = category.leaf if isinstance(category, Category) else category
        return self.lookup(leaf).default_level

    def label(self, candidate_leaf: str) -> str:
        return self.lookup(candidate_leaf).category.label


def _parse_level(raw, where: str) -> SensitivityLevel:
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise TaxonomyError(f"{where}: level must be an integer, got {raw!r}")
    try:
        return SensitivityLevel(raw)
    except ValueError:
        raise TaxonomyError(f"{where}: level {raw} out of range [1,5]") from None


def _iter_rows(doc: Mapping) -> Iterable[tuple[str, str, Mapping]]:
    groups = doc.get("groups") or {}
    if not isinstance(groups, Mapping):
        raise TaxonomyError("'groups' must be a mapping")
    for group, body in groups.items():
        if group not in TOP_LEVEL_GROUPS:
            raise TaxonomyError(f"unknown top-level group {group!r}")
        subcategories = (body or {}).get("subcategories") or {}
        if not isinstance(subcategories, Mapping):
            raise TaxonomyError(f"{group}: 'subcategories' must be a mapping")
        for sub, leaves in subcategories.items():
            if not isinstance(leaves, list):
                raise TaxonomyError(f"{group}/{sub}: leaves must be a list")
            for row in leaves:
                if not isinstance(row, Mapping):
                    raise TaxonomyError(f"{group}/{sub}: malformed row {row!r}")
                yield group, sub, row


def taxonomy_from_dict(doc: Mapping | None) -> Taxonomy:
    if doc is None:
        return Taxonomy(entries=())
    if not isinstance(doc, Mapping):
        raise TaxonomyError("taxonomy document must be a mapping")
    entries = []
    for group, sub, row in _iter_rows(doc):
        slug = row.get("slug")
        if not isinstance(slug, str) or not slug.strip():
            raise TaxonomyError(f"{group}/{sub}: row without a slug: {row!r}")
        level = _parse_level(row.get("level"), f"{group}/{sub}/{slug}")
        category = Category(group, sub, slug.strip(), str(row.get("label", "")))
        entries.append(TaxonomyEntry(category, level, str(row.get("notes", ""))))
    return Taxonomy(entries=tuple(entries), version=str(doc.get("version", "")))


def load_taxonomy(source: str | Path | None = None) -> Taxonomy:
    """Load a taxonomy YAML file. ``None`` loads the bundled default.

    An empty document yields an empty taxonomy; callers that need a vocabulary
    should check ``len(taxonomy)``.
    """
    path = Path(source) if source is not None else DEFAULT_TAXONOMY_PATH
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise TaxonomyError(f"malformed taxonomy document {path}: {exc}") from exc
    return taxonomy_from_dict(doc)
