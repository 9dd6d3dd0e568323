"""Benchmark data model: prompt/response records, filtering, prompt assembly.

Prompts and responses travel as JSON-lines files, one object per line.
Filtering replaces a manual curation step with individually toggleable
heuristics plus an explicit blocklist, and always produces a report.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from langconfusion.langcore import LanguageCode

DATASETS = ("aya", "dolly", "okapi", "sharegpt", "native", "complex", "custom")
SETTINGS = ("monolingual", "crosslingual")
POSITIONS = ("start", "end", "integrated")

LANGUAGE_NAMES = {
    LanguageCode.AR: "Arabic",
    LanguageCode.DE: "German",
    LanguageCode.EN: "English",
    LanguageCode.ES: "Spanish",
    LanguageCode.FR: "French",
    LanguageCode.HI: "Hindi",
    LanguageCode.ID: "Indonesian",
    LanguageCode.IT: "Italian",
    LanguageCode.JA: "Japanese",
    LanguageCode.KO: "Korean",
    LanguageCode.PT: "Portuguese",
    LanguageCode.RU: "Russian",
    LanguageCode.TR: "Turkish",
    LanguageCode.VI: "Vietnamese",
    LanguageCode.ZH: "Chinese",
}


class SchemaError(ValueError):
    """A record failed schema validation; the message names the field."""


@dataclass(frozen=True)
class PromptRecord:
    id: str
    dataset: str
    setting: str
    text: str
    target: LanguageCode
    instruction_language: LanguageCode
    instruction_position: str | None = None

    def __post_init__(self) -> None:
        if self.dataset not in DATASETS:
            raise SchemaError(f"dataset: unknown dataset {self.dataset!r}")
        if self.setting not in SETTINGS:
            raise SchemaError(f"setting: unknown setting {self.setting!r}")
        if self.target is LanguageCode.UND:
            raise SchemaError("target: must not be 'und'")
        if self.setting == "monolingual":
            if self.instruction_language is not self.target:
                raise SchemaError(
                    "instruction_language: must equal target for monolingual prompts"
                )
            if self.instruction_position is not None:
                raise SchemaError(
                    "instruction_position: must be absent for monolingual prompts"
                )
        else:
            if self.instruction_language is not LanguageCode.EN:
                raise SchemaError(
                    "instruction_language: must be 'en' for crosslingual prompts"
                )
            if self.target is LanguageCode.EN:
                raise SchemaError("target: crosslingual target must differ from 'en'")
            if self.instruction_position not in POSITIONS:
                raise SchemaError(
                    "instruction_position: required for crosslingual prompts, "
                    f"one of {POSITIONS}"
                )


@dataclass(frozen=True)
class ResponseRecord:
    prompt_id: str
    model: str
    text: str
    sampling: dict | None = None
    trace_path: str | None = None


def prompt_to_dict(prompt: PromptRecord) -> dict:
    doc = {
        "id": prompt.id,
        "dataset": prompt.dataset,
        "setting": prompt.setting,
        "text": prompt.text,
        "target": prompt.target.value,
        "instruction_language": prompt.instruction_language.value,
    }
    if prompt.instruction_position is not None:
        doc["instruction_position"] = prompt.instruction_position
    return doc


def prompt_from_dict(doc: dict) -> PromptRecord:
    try:
        return PromptRecord(
            id=doc["id"],
            dataset=doc["dataset"],
            setting=doc["setting"],
            text=doc["text"],
            target=LanguageCode.parse(doc["target"]),
            instruction_language=LanguageCode.parse(doc["instruction_language"]),
            instruction_position=doc.get("instruction_position"),
        )
    except KeyError as exc:
        raise SchemaError(f"{exc.args[0]}: missing field") from exc


def response_to_dict(response: ResponseRecord) -> dict:
    doc = {"prompt_id": response.prompt_id, "model": response.model, "text": response.text}
    if response.sampling is not None:
        doc["sampling"] = response.sampling
    if response.trace_path is not None:
        doc["trace_path"] = response.trace_path
    return doc


def response_from_dict(doc: dict) -> ResponseRecord:
    try:
        return ResponseRecord(
            prompt_id=doc["prompt_id"],
            model=doc["model"],
            text=doc["text"],
            sampling=doc.get("sampling"),
            trace_path=doc.get("trace_path"),
        )
    except KeyError as exc:
        raise SchemaError(f"{exc.args[0]}: missing field") from exc


def _load_jsonl(path: str | Path, parse) -> list:
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            if not raw.strip():
                continue
            try:
                records.append(parse(json.loads(raw)))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            except (SchemaError, ValueError) as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    return records


def _save_jsonl(records: Iterable, path: str | Path, serialize) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(serialize(record), ensure_ascii=False, sort_keys=True))
            handle.write("\n")


def load_prompts(path: str | Path) -> list[PromptRecord]:
    return _load_jsonl(path, prompt_from_dict)


def save_prompts(prompts: Iterable[PromptRecord], path: str | Path) -> None:
    _save_jsonl(prompts, path, prompt_to_dict)


def load_responses(path: str | Path) -> list[ResponseRecord]:
    return _load_jsonl(path, response_from_dict)


def save_responses(responses: Iterable[ResponseRecord], path: str | Path) -> None:
    _save_jsonl(responses, path, response_to_dict)


class FilterRule(Enum):
    TOO_SHORT_COMPLETION = "too_short_completion"
    SINGLE_WORD_ANSWERABLE = "single_word_answerable"
    MULTIPLE_CHOICE = "multiple_choice"
    LIST_REQUEST = "list_request"
    CODE_OR_MATH = "code_or_math"
    EXPLICIT_BLOCKLIST = "explicit_blocklist"


ALL_RULES = tuple(FilterRule)

#: Minimum completion length in words; shorter attached completions remove the prompt.
MIN_COMPLETION_WORDS = 5

_MCQ_PATTERNS = ("A)", "B)", "(a)", "(b)")

_SINGLE_WORD_PATTERNS = [
    re.compile(p, re.IGNORECASE)
    for p in (
        r"\bin (?:one|a single) word\b",
        r"\bwith (?:one|a single) word\b",
        r"\bone[- ]word answer\b",
        r"\byes or no\b",
        r"\btrue or false\b",
    )
]

_LIST_PATTERNS = [
    re.compile(p, re.IGNORECASE)
    for p in (
        r"\blist of\b",
        r"\b(?:make|give|write|provide|create) (?:me )?a list\b",
        r"\blist (?:the|all|some|a few|\d+)\b",
        r"\benumerate\b",
        r"\bbullet points?\b",
        r"\bname \d+\b",
    )
]

_MATH_OPERATORS = set("+-*/=^<>")
_MATH_WINDOW = 20
_CODE_FENCE = "```"


@dataclass
class FilterReport:
    """Which prompts were removed and why. Exhaustive over the input."""

    removed: dict[str, list[FilterRule]] = field(default_factory=dict)
    n_input: int = 0
    n_kept: int = 0


def _fires_multiple_choice(text: str) -> bool:
    return sum(1 for pattern in _MCQ_PATTERNS if pattern in text) >= 2


def _fires_code_or_math(text: str) -> bool:
    if _CODE_FENCE in text:
        return True
    positions = [i for i, ch in enumerate(text) if ch in _MATH_OPERATORS]
    for i, start in enumerate(positions):
        if i + 2 < len(positions) and positions[i + 2] - start < _MATH_WINDOW:
            return True
    return False


def _fires_single_word(text: str) -> bool:
    return any(p.search(text) for p in _SINGLE_WORD_PATTERNS)


def _fires_list_request(text: str) -> bool:
    return any(p.search(text) for p in _LIST_PATTERNS)


def filter_prompts(
    prompts: Sequence[PromptRecord],
    rules: Sequence[FilterRule] = ALL_RULES,
    blocklist: frozenset[str] | set[str] = frozenset(),
    completions: dict[str, str] | None = None,
) -> tuple[list[PromptRecord], FilterReport]:
    """Apply the enabled rules; return kept prompts and the removal report.

    ``completions`` maps prompt id to a reference completion when the source
    dataset ships one; the short-completion rule only fires for prompts that
    have an entry there.
    """
    if not rules:
        raise ValueError("no filter rules enabled")
    enabled = set(rules)
    completions = completions or {}
    kept: list[PromptRecord] = []
    report = FilterReport(n_input=len(prompts))
    for prompt in prompts:
        reasons: list[FilterRule] = []
        completion = completions.get(prompt.id)
        if (
            FilterRule.TOO_SHORT_COMPLETION in enabled
            and completion is not None
            and len(completion.split()) < MIN_COMPLETION_WORDS
        ):
            reasons.append(FilterRule.TOO_SHORT_COMPLETION)
        if FilterRule.SINGLE_WORD_ANSWERABLE in enabled and _fires_single_word(prompt.text):
            reasons.append(FilterRule.SINGLE_WORD_ANSWERABLE)
        if FilterRule.MULTIPLE_CHOICE in enabled and _fires_multiple_choice(prompt.text):
            reasons.append(FilterRule.MULTIPLE_CHOICE)
        if FilterRule.LIST_REQUEST in enabled and _fires_list_request(prompt.text):
            reasons.append(FilterRule.LIST_REQUEST)
        if FilterRule.CODE_OR_MATH in enabled and _fires_code_or_math(prompt.text):
            reasons.append(FilterRule.CODE_OR_MATH)
        if FilterRule.EXPLICIT_BLOCKLIST in enabled and prompt.id in blocklist:
            reasons.append(FilterRule.EXPLICIT_BLOCKLIST)
        if reasons:
            report.removed[prompt.id] = reasons
        else:
            kept.append(prompt)
    report.n_kept = len(kept)
    return kept, report


def load_lines(path: str | Path) -> list[str]:
    """Plain-text list files (templates, blocklists): one entry per line."""
    entries = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if line:
            entries.append(line)
    return entries


def amend_crosslingual(
    prompt_text: str,
    target: LanguageCode,
    position: str,
    templates: Sequence[str],
    seed: int,
    prompt_id: str | None = None,
    dataset: str = "custom",
) -> PromptRecord:
    """Attach an English generate-in-X instruction to an English prompt.

    The template is chosen uniformly by a generator seeded with ``seed``, so
    the same inputs always produce the same record. ``integrated`` prompts
    are authored by hand and only loaded, never synthesized here.
    """
    if target is LanguageCode.EN:
        raise ValueError("crosslingual target must differ from English")
    if target is LanguageCode.UND:
        raise ValueError("target must not be 'und'")
    if position not in ("start", "end"):
        raise ValueError(f"position must be 'start' or 'end', got {position!r}")
    if not templates:
        raise ValueError("empty template set")
    name = LANGUAGE_NAMES[target]
    template = random.Random(seed).choice(list(templates))
    instruction = template.format(language=name, Language=name)
    if position == "start":
        text = f"{instruction} {prompt_text}"
    else:
        text = f"{prompt_text} {instruction}"
    if prompt_id is None:
        digest = hashlib.sha256(
            f"{prompt_text}\x1f{target.value}\x1f{position}\x1f{seed}".encode("utf-8")
        ).hexdigest()
        prompt_id = f"xl-{digest[:12]}"
    return PromptRecord(
        id=prompt_id,
        dataset=dataset,
        setting="crosslingual",
        text=text,
        target=target,
        instruction_language=LanguageCode.EN,
        instruction_position=position,
    )


DEFAULT_ANSWER_BUDGET = 400


def build_fewshot(
    examples: Sequence[tuple[str, str]],
    query: str,
    style: str = "qa_template",
    answer_budget: int = DEFAULT_ANSWER_BUDGET,
) -> str | list[tuple[str, str]]:
    """Assemble a few-shot prompt from (question, answer) pairs.

    ``qa_template`` yields a single string ending with the unanswered "A:";
    ``chat_turns`` yields alternating (role, text) turns ending with the
    query as a user turn. Answers are truncated to ``answer_budget``
    characters so demonstrations cannot spawn new questions.
    """
    if style == "qa_template":
        parts = []
        for question, answer in examples:
            parts.append(f"Q: {question}\n\nA: {answer[:answer_budget]}\n\n")
        parts.append(f"Q: {query}\n\nA:")
        return "".join(parts)
    if style == "chat_turns":
        turns: list[tuple[str, str]] = []
        for question, answer in examples:
            turns.append(("user", question))
            turns.append(("assistant", answer[:answer_budget]))
        turns.append(("user", query))
        return turns
    raise ValueError(f"unknown few-shot style: {style!r}")
