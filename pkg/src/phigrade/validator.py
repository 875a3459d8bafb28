"""Parse raw model output into validated (entity, category, level) triples.

The envelope is lenient: code fences and prose around the JSON are ignored, and
both a bare array and an object with a ``triples`` array are accepted. Items are
strict: each one is accepted or rejected with a machine-readable reason, and the
only mutation ever applied is canonicalising the category string.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any

from .taxonomy import SensitivityLevel, Taxonomy

log = logging.getLogger(__name__)

BAD_CATEGORY = "bad_category"
BAD_LEVEL = "bad_level"
EMPTY_ENTITY = "empty_entity"
MALFORMED_ITEM = "malformed_item"
REASONS = (BAD_CATEGORY, BAD_LEVEL, EMPTY_ENTITY, MALFORMED_ITEM)

_ITEM_KEYS = ("entity", "category", "level")


@dataclass(frozen=True)
class Triple:
    """One extracted item. ``rules_fired`` is audit data and excluded from equality."""

    entity: str
    category: str
    level: SensitivityLevel
    rules_fired: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not isinstance(self.entity, str) or not self.entity.strip():
            raise ValueError("entity must be non-empty text")
        object.__setattr__(self, "level", SensitivityLevel(self.level))

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.entity, self.category, int(self.level))

    def to_dict(self) -> dict:
        return {"entity": self.entity, "category": self.category, "level": int(self.level)}


@dataclass
class Rejection:
    item: Any
    reason: str


@dataclass
class ValidationOutcome:
    accepted: list[Triple] = field(default_factory=list)
    rejected: list[Rejection] = field(default_factory=list)
    parse_failed: bool = False

    def count(self, reason: str) -> int:
        return sum(1 for r in self.rejected if r.reason == reason)


def _candidate_payloads(text: str):
    """Yield JSON values found in ``text``: the whole string first, then every
    value starting at a ``[`` or ``{``."""
    decoder = json.JSONDecoder()
    stripped = text.strip()
    try:
        yield json.loads(stripped)
    except (ValueError, RecursionError):
        pass
    for i, ch in enumerate(text):
        if ch in "[{":
            try:
                value, _ = decoder.raw_decode(text, i)
            except (ValueError, RecursionError):
                continue
            yield value


def _as_item_list(value) -> list | None:
    if isinstance(value, list):
        return value
    if isinstance(value, dict) and isinstance(value.get("triples"), list):
        return value["triples"]
    return None


def extract_items(raw_text: str) -> list | None:
    """Locate the list of raw items, or None when nothing usable parses.

    A ``{"triples": [...]}`` object or a list of objects wins over any other
    list, so bracketed prose such as ``[1]`` before the answer is skipped.
    """
    if not isinstance(raw_text, str):
        return None
    fallback = None
    for value in _candidate_payloads(raw_text):
        items = _as_item_list(value)
        if items is None:
            continue
        if isinstance(value, dict) or (items and all(isinstance(i, dict) for i in items)):
            return items
        if fallback is None:
            fallback = items
    return fallback


def check_item(item, taxonomy: Taxonomy) -> tuple[Triple | None, str | None]:
    if not isinstance(item, dict) or any(k not in item for k in _ITEM_KEYS):
        return None, MALFORMED_ITEM
    entity, category, level = item["entity"], item["category"], item["level"]
    if not isinstance(entity, str):
        return None, MALFORMED_ITEM
    if not entity.strip():
        return None, EMPTY_ENTITY
    if not taxonomy.is_compatible(category):
        return None, BAD_CATEGORY
    if isinstance(level, bool) or not isinstance(level, int) or not 1 <= level <= 5:
        return None, BAD_LEVEL
    return Triple(entity, taxonomy.canonical(category), SensitivityLevel(level)), None


def parse_and_validate(raw_text: str, taxonomy: Taxonomy) -> ValidationOutcome:
    items = extract_items(raw_text)
    if items is None:
        return ValidationOutcome(parse_failed=True)
    outcome = ValidationOutcome()
    for item in items:
        triple, reason = check_item(item, taxonomy)
        if triple is not None:
            outcome.accepted.append(triple)
        else:
            if reason == BAD_CATEGORY:
                log.debug("near-miss category %r", item.get("category"))
            outcome.rejected.append(Rejection(item, reason))
    return outcome


def rejection_log_lines(record_id: str, outcome: ValidationOutcome) -> list[str]:
    """JSON lines for the audit log: record id, raw item, reason."""
    return [
        json.dumps({"record_id": record_id, "item": r.item, "reason": r.reason},
                   ensure_ascii=False, sort_keys=True, default=repr)
        for r in outcome.rejected
    ]
