"""Deterministic override rules applied to validated triples.

Rules are evaluated in descending priority; the first matching rule of each
action class is kept. A matching downgrade suppresses every promotion, so an
uncertain or ruled-out mention is never raised to level 5.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

import yaml

from .taxonomy import SensitivityLevel, Taxonomy, normalize
from .validator import Triple

DEFAULT_RULES_PATH = Path(str(resources.files("phigrade") / "data" / "rules.yaml"))

SET = "set_category_and_level"
PROMOTE = "promote_level"
DOWNGRADE = "downgrade_level"
ACTIONS = (SET, PROMOTE, DOWNGRADE)
SCOPES = ("entity_text", "surrounding_context")

DEFAULT_HPV_DISTANCE = 12


class RulePackError(ValueError):
    pass


@dataclass(frozen=True)
class OverrideRule:
    id: str
    pattern: str
    scope: str
    action: str
    priority: int
    target_category: str | None = None
    target_level: SensitivityLevel | None = None
    # optional guards: the triple's category must be listed / its entity must match
    when_category: tuple[str, ...] = ()
    when_entity: str | None = None
    _regex: re.Pattern = field(init=False, repr=False, compare=False)
    _entity_regex: re.Pattern | None = field(init=False, repr=False, compare=False)
    _guard: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise RulePackError(f"rule {self.id}: unknown scope {self.scope!r}")
        if self.action not in ACTIONS:
            raise RulePackError(f"rule {self.id}: unknown action {self.action!r}")
        if self.target_level is None:
            raise RulePackError(f"rule {self.id}: {self.action} requires target_level")
        if self.action == SET and not self.target_category:
            raise RulePackError(f"rule {self.id}: {SET} requires target_category")
        try:
            object.__setattr__(self, "target_level", SensitivityLevel(self.target_level))
        except ValueError:
            raise RulePackError(f"rule {self.id}: target_level out of range") from None
        flags = re.IGNORECASE | re.DOTALL
        try:
            object.__setattr__(self, "_regex", re.compile(self.pattern, flags))
            object.__setattr__(self, "_entity_regex",
                               re.compile(self.when_entity, flags) if self.when_entity else None)
        except re.error as exc:
            raise RulePackError(f"rule {self.id}: pattern does not compile: {exc}") from exc
        object.__setattr__(self, "_guard", frozenset(normalize(c) for c in self.when_category))

    def matches(self, triple: Triple, entity: str, context: str) -> bool:
        if self._guard and normalize(triple.category) not in self._guard:
            return False
        if self._entity_regex is not None and not self._entity_regex.search(entity):
            return False
        text = entity if self.scope == "entity_text" else context
        return self._regex.search(text) is not None

    def apply(self, triple: Triple) -> Triple:
        category = self.target_category or triple.category
        # a recategorising downgrade lands exactly on the target: the new category fixes the grade
        if self.action == SET or (self.action == DOWNGRADE and self.target_category):
            level = self.target_level
        elif self.action == PROMOTE:
            level = max(triple.level, self.target_level)
        else:
            level = min(triple.level, self.target_level)
        return replace(triple, category=category, level=level)


@dataclass(frozen=True)
class RulePack:
    rules: tuple[OverrideRule, ...] = ()
    version: str = ""
    hpv_genotypes: tuple[str, ...] = ()
    special_disease_keywords: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        seen = {}
        for rule in self.rules:
            if rule.priority in seen:
                raise RulePackError(
                    f"rules {seen[rule.priority]!r} and {rule.id!r} share priority {rule.priority}")
            seen[rule.priority] = rule.id
        object.__setattr__(self, "rules",
                           tuple(sorted(self.rules, key=lambda r: -r.priority)))

    def __len__(self):
        return len(self.rules)


@dataclass(frozen=True)
class RuleDecision:
    triple_before: Triple
    triple_after: Triple
    fired_rule_ids: tuple[str, ...] = ()


def _fold(text: str) -> str:
    return unicodedata.normalize("NFKC", text)


def apply_rules(triple: Triple, context_window: str, pack: RulePack) -> RuleDecision:
    entity = _fold(triple.entity)
    context = _fold(context_window) if context_window else entity
    chosen: dict[str, OverrideRule] = {}
    for rule in pack.rules:
        if rule.action not in chosen and rule.matches(triple, entity, context):
            chosen[rule.action] = rule
    if DOWNGRADE in chosen:
        applied = [chosen[DOWNGRADE]]
    else:
        applied = [chosen[a] for a in (SET, PROMOTE) if a in chosen]
    if not applied:
        return RuleDecision(triple, triple, ())
    after = triple
    for rule in applied:
        after = rule.apply(after)
    fired = tuple(r.id for r in applied)
    merged = tuple(dict.fromkeys(triple.rules_fired + fired))
    return RuleDecision(triple, replace(after, rules_fired=merged), fired)


# ---------------------------------------------------------------------------
# loading


def hpv_pattern(genotypes, markers, max_distance: int = DEFAULT_HPV_DISTANCE) -> str:
    types = "|".join(re.escape(g) for g in sorted(genotypes, key=lambda g: (-len(g), g)))
    marks = "|".join(re.escape(m) for m in markers)
    # the gap may not contain a negative result marker
    gap = rf"(?:(?!阴性|negative|\(-\)|-\)).){{0,{int(max_distance)}}}?"
    return rf"HPV[\s\-]*(?:{types})(?!\d){gap}(?:{marks})"


def _keyword_alternation(words) -> str:
    # keywords are regex fragments; longest first
    return "|".join(f"(?:{w})" for w in sorted(set(words), key=lambda w: (-len(w), w)))


def _canon(category, taxonomy: Taxonomy | None, where: str):
    if category is None or taxonomy is None:
        return category
    if not taxonomy.is_compatible(category):
        raise RulePackError(f"{where}: target category {category!r} not in taxonomy")
    return taxonomy.canonical(category)


def _expand_hpv(section: Mapping, taxonomy) -> tuple[list[OverrideRule], tuple[str, ...]]:
    genotypes = tuple(str(g) for g in section.get("genotypes", ()))
    if not genotypes:
        return [], ()
    markers = section.get("positivity_markers") or ["阳性", "positive", "+"]
    distance = section.get("max_distance", DEFAULT_HPV_DISTANCE)
    rule = OverrideRule(
        id=section.get("id", "hpv-high-risk-positive"),
        pattern=hpv_pattern(genotypes, markers, distance),
        scope="entity_text",
        action=SET,
        priority=int(section["priority"]),
        target_category=_canon(section.get("category", "sensitive test result"), taxonomy, "hpv"),
        target_level=section.get("level", 5),
        when_category=tuple(section.get("when_category", ())),
    )
    return [rule], genotypes


def _expand_special(section: Mapping, taxonomy) -> tuple[list[OverrideRule], dict]:
    classes = section.get("classes") or {}
    rules, keywords = [], {}
    base = int(section.get("priority", 0))
    target = _canon(section.get("category", "special disease"), taxonomy, "special_disease")
    for offset, (name, words) in enumerate(classes.items()):
        words = tuple(str(w) for w in words or ())
        if not words:
            continue
        keywords[name] = words
        rules.append(OverrideRule(
            id=f"special-disease-{name.replace('_', '-')}",
            pattern=_keyword_alternation(words),
            scope="entity_text",
            action=SET,
            priority=base - offset,
            target_category=target,
            target_level=section.get("level", 5),
            when_category=tuple(section.get("when_category", ())),
        ))
    return rules, keywords


def _expand_uncertainty(section: Mapping, keywords: dict, taxonomy) -> list[OverrideRule]:
    all_words = [w for words in keywords.values() for w in words]
    entity_guard = _keyword_alternation(all_words) if all_words else None
    rules = []
    for kind in ("suspected", "ruled_out"):
        sub = section.get(kind)
        if not sub or not sub.get("markers"):
            continue
        rules.append(OverrideRule(
            id=f"uncertainty-{kind.replace('_', '-')}",
            pattern="|".join(f"(?:{m})" for m in sub["markers"]),
            scope="surrounding_context",
            action=DOWNGRADE,
            priority=int(sub["priority"]),
            target_category=_canon(sub.get("category"), taxonomy, f"uncertainty/{kind}"),
            target_level=sub.get("level", section.get("level", 2)),
            when_category=tuple(section.get("when_category", ())),
            when_entity=sub.get("when_entity", entity_guard),
        ))
    return rules


def _explicit_rule(row: Mapping, taxonomy) -> OverrideRule:
    try:
        return OverrideRule(
            id=str(row["id"]),
            pattern=str(row["pattern"]),
            scope=row.get("scope", "entity_text"),
            action=row["action"],
            priority=int(row["priority"]),
            target_category=_canon(row.get("target_category"), taxonomy, str(row["id"])),
            target_level=row.get("target_level"),
            when_category=tuple(row.get("when_category", ())),
            when_entity=row.get("when_entity"),
        )
    except KeyError as exc:
        raise RulePackError(f"rule {row!r} missing field {exc}") from None


def rule_pack_from_dict(doc: Mapping | None, taxonomy: Taxonomy | None = None) -> RulePack:
    if not doc:
        return RulePack()
    if not isinstance(doc, Mapping):
        raise RulePackError("rule document must be a mapping")
    rules, genotypes, keywords = [], (), {}
    if doc.get("hpv"):
        hpv_rules, genotypes = _expand_hpv(doc["hpv"], taxonomy)
        rules += hpv_rules
    if doc.get("special_disease"):
        special_rules, keywords = _expand_special(doc["special_disease"], taxonomy)
        rules += special_rules
    if doc.get("uncertainty"):
        rules += _expand_uncertainty(doc["uncertainty"], keywords, taxonomy)
    rules += [_explicit_rule(row, taxonomy) for row in doc.get("rules") or ()]
    return RulePack(tuple(rules), str(doc.get("version", "")), genotypes, keywords)


def load_rule_pack(source: str | Path | None = None, taxonomy: Taxonomy | None = None) -> RulePack:
    path = Path(source) if source is not None else DEFAULT_RULES_PATH
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise RulePackError(f"malformed rule document {path}: {exc}") from exc
    return rule_pack_from_dict(doc, taxonomy)
