"""Generation-layer prompt: role, task, grading rules, exemplars and output schema.

The wording below is a reconstruction; only its four-part structure is fixed.
The rules digest and the schema are generated from the loaded taxonomy so the
prompt cannot drift from the grading table in use.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .taxonomy import Taxonomy
from .validator import Triple, check_item

DEFAULT_EXEMPLARS_PATH = Path(str(resources.files("phigrade") / "data" / "exemplars.jsonl"))


class ExemplarError(ValueError):
    pass


@dataclass(frozen=True)
class Ablation:
    few_shot: bool = True
    schema: bool = True
    rules: bool = True

    @property
    def name(self) -> str:
        for key, value in ABLATIONS.items():
            if value == self:
                return key
        return "custom"


ABLATIONS = {
    "full": Ablation(),
    "no-few-shot": Ablation(few_shot=False),
    "no-schema": Ablation(schema=False),
    "no-rules": Ablation(rules=False),
    "zero": Ablation(few_shot=False, schema=False, rules=False),
}


@dataclass(frozen=True)
class Exemplar:
    input_text: str
    expected_triples: tuple[Triple, ...]

    def answer(self) -> str:
        return dump_triples(self.expected_triples)


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    task_text: str
    rules_text: str
    exemplars: tuple[Exemplar, ...] = ()
    output_schema: dict | None = None
    ablation: Ablation = field(default_factory=Ablation)


def dump_triples(triples) -> str:
    """Canonical JSON answer text for a list of triples."""
    return json.dumps({"triples": [t.to_dict() for t in triples]}, ensure_ascii=False)


SYSTEM_TEXT = (
    "You are a clinical privacy extraction engine. You read online medical "
    "consultation text and output JSON only, with no prose, no explanations and "
    "no code fences. Entities are short Chinese spans copied verbatim from the input."
)

_TASK_HEAD = (
    "Task: extract every privacy-relevant item from the consultation as triples "
    "(entity, category, level). `entity` is the shortest verbatim span that carries "
    "the information. `category` must be one of the category slugs listed in the "
    "grading rules, spelled exactly as listed. `level` is an integer from 1 to 5 "
    "taken from the grading rules. List each distinct triple once."
)
_FORMAT_SCHEMA = (
    "Answer with a single JSON object that conforms to the attached JSON schema: "
    '{"triples": [{"entity": ..., "category": ..., "level": ...}, ...]}.'
)
_FORMAT_FREE = (
    "Answer with a single JSON object of the form "
    '{"triples": [{"entity": ..., "category": ..., "level": ...}, ...]}.'
)

_KEY_POINTS = (
    "Key points:",
    "- A special disease that is affirmed (diagnosed, treated, confirmed) is `special disease`, level 5.",
    "- A suspected disease (疑似, 怀疑, 可能是, 不排除) is `disease-suspected`, level 2; an "
    "explicitly ruled-out disease (排除, 不是, 否认) is `disease-ruled out`, level 2.",
    "- A positive result for HIV, hepatitis or a high-risk HPV genotype is "
    "`sensitive test result`, level 5; other results are `test/exam result`, level 3.",
    "- A full calendar date is `date` (level 3); a month alone is `month` and a year alone is "
    "`year` (level 2).",
    "- A full name is `patient name` or `doctor name` (level 4); a surname alone "
    "(e.g. 张女士, 李医生) is `patient surname` or `doctor surname` (level 3).",
    "- Test/exam names (level 2) and test/exam results (level 3) are different categories.",
)


def render_rules_text(taxonomy: Taxonomy) -> str:
    lines = ["Grading rules (category slug [label]: level):"]
    group = sub = None
    for entry in taxonomy:
        cat = entry.category
        if cat.top_level != group:
            group, sub = cat.top_level, None
            lines.append(f"{group}:")
        if cat.subcategory != sub:
            sub = cat.subcategory
            lines.append(f"  {sub}:")
        label = f" [{cat.label}]" if cat.label else ""
        lines.append(f"    - {cat.leaf}{label}: {int(entry.default_level)}")
    lines.extend(_KEY_POINTS)
    return "\n".join(lines)


def output_schema(taxonomy: Taxonomy) -> dict:
    item = {
        "type": "object",
        "properties": {
            "entity": {"type": "string"},
            "category": {"type": "string", "enum": taxonomy.slugs},
            "level": {"type": "integer", "enum": [1, 2, 3, 4, 5]},
        },
        "required": ["entity", "category", "level"],
        "additionalProperties": False,
    }
    return {
        "type": "object",
        "properties": {"triples": {"type": "array", "items": item}},
        "required": ["triples"],
        "additionalProperties": False,
    }


def _check_exemplar(ex: Exemplar, taxonomy: Taxonomy, where: str):
    for t in ex.expected_triples:
        if not taxonomy.is_compatible(t.category):
            raise ExemplarError(f"{where}: unknown category {t.category!r}")


def build_prompt(taxonomy: Taxonomy, exemplars=(), ablation: Ablation = Ablation()) -> PromptBundle:
    if len(taxonomy) == 0:
        raise ValueError("taxonomy is empty")
    for i, ex in enumerate(exemplars):
        _check_exemplar(ex, taxonomy, f"exemplar {i}")
    task = _TASK_HEAD + " " + (_FORMAT_SCHEMA if ablation.schema else _FORMAT_FREE)
    return PromptBundle(
        system_text=SYSTEM_TEXT,
        task_text=task,
        rules_text=render_rules_text(taxonomy),
        exemplars=tuple(exemplars) if ablation.few_shot else (),
        output_schema=output_schema(taxonomy) if ablation.schema else None,
        ablation=ablation,
    )


def render_messages(bundle: PromptBundle, input_chunk: str) -> list[dict]:
    system = "\n\n".join([bundle.system_text, bundle.task_text, bundle.rules_text])
    messages = [{"role": "system", "content": system}]
    for ex in bundle.exemplars:
        messages.append({"role": "user", "content": ex.input_text})
        messages.append({"role": "assistant", "content": ex.answer()})
    messages.append({"role": "user", "content": input_chunk})
    return messages


def load_exemplars(source: str | Path | None, taxonomy: Taxonomy) -> list[Exemplar]:
    """Read exemplars from JSON lines ``{"input_text": ..., "triples": [...]}``."""
    path = Path(source) if source is not None else DEFAULT_EXEMPLARS_PATH
    exemplars = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExemplarError(f"{path}:{lineno}: {exc.msg}") from None
            if not isinstance(row, dict) or not isinstance(row.get("input_text"), str) \
                    or not isinstance(row.get("triples"), list):
                raise ExemplarError(f"{path}:{lineno}: expected input_text and triples")
            triples = []
            for item in row["triples"]:
                triple, reason = check_item(item, taxonomy)
                if triple is None:
                    raise ExemplarError(f"{path}:{lineno}: {reason} in {item!r}")
                triples.append(triple)
            exemplars.append(Exemplar(row["input_text"], tuple(triples)))
    return exemplars
