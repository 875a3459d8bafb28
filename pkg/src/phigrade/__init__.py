"""Extraction and sensitivity grading of privacy triples in online health consultations."""

from .taxonomy import SensitivityLevel, Taxonomy, load_taxonomy
from .validator import Triple, parse_and_validate
from .rules import RulePack, apply_rules, load_rule_pack
from .prompt import ABLATIONS, Ablation, build_prompt, load_exemplars, render_messages
from .pipeline import ConsultationRecord, RecordResult, chunk, process_corpus, process_record
from .metrics import evaluate

__version__ = "0.1.0"
