"""Turn a model response into a per-line, per-word confusion verdict.

Line-level judgments come from LID; word-level detection runs only on
responses without line errors and is dispatched by the target's script:
dictionary-based English word spotting for non-Latin targets, foreign-script
character detection for Latin targets.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol

from langconfusion.langcore import (
    LATIN_SCRIPT_LANGUAGES,
    NON_LATIN_SCRIPT_LANGUAGES,
    LanguageCode,
    ScriptClass,
    TokenSpan,
    count_units,
    latin_runs,
    line_index_of,
    script_of_char,
    segment_lines,
)

#: Lines of at most this many units are never judged (LID is unreliable there).
DEFAULT_GUARD_UNITS = 4

#: Flagged dictionary words must be at least this long.
MIN_FLAG_LENGTH = 2


class LineLid(Protocol):
    def predict_line(self, text: str, response_id: str = "", line_index: int = 0): ...


class LineStatus(Enum):
    PASSED = "Passed"
    FAILED = "Failed"
    SKIPPED = "Skipped"


class FlagReason(Enum):
    DICTIONARY_ENGLISH_WORD = "DictionaryEnglishWord"
    FOREIGN_SCRIPT_LETTER = "ForeignScriptLetter"


@dataclass(frozen=True)
class LineJudgment:
    line_index: int
    status: LineStatus
    predicted: LanguageCode
    confidence: float


@dataclass(frozen=True)
class WordFlag:
    line_index: int
    span: TokenSpan
    token: str
    reason: FlagReason


@dataclass
class DetectionRecord:
    response_id: str
    target: LanguageCode
    line_judgments: list[LineJudgment]
    word_flags: list[WordFlag]
    has_line_error: bool
    has_word_error: bool
    #: True when no line was actually judged (all skipped or empty response).
    skipped_only: bool
    #: Grouping tags for metric aggregation (model, language, dataset, setting).
    tags: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class EnglishWordDictionary:
    """Lowercase ASCII words considered 'typical English' for word spotting."""

    words: frozenset[str]
    source_digest: str

    def __contains__(self, word: str) -> bool:
        return word in self.words


def load_dictionary(path: str | Path) -> EnglishWordDictionary:
    """Load a one-word-per-line dictionary file.

    Capitalized entries (often proper nouns or acronyms), entries shorter
    than two characters, and entries that are not pure ASCII lowercase
    letters are dropped.
    """
    blob = Path(path).read_bytes()
    digest = hashlib.sha256(blob).hexdigest()
    words = set()
    for raw in blob.decode("utf-8").splitlines():
        word = raw.strip()
        if len(word) < MIN_FLAG_LENGTH:
            continue
        if not (word.isascii() and word.isalpha() and word.islower()):
            continue
        words.add(word)
    return EnglishWordDictionary(words=frozenset(words), source_digest=digest)


def detect_line_confusion(
    response_text: str,
    target: LanguageCode,
    lid: LineLid,
    guard_units: int = DEFAULT_GUARD_UNITS,
    response_id: str = "",
) -> list[LineJudgment]:
    """Judge every non-blank line of a response against the target language.

    Lines with at most ``guard_units`` units are skipped. An LID abstention
    (``und``) on a judged line also skips rather than fails it: abstention
    must not invent errors.
    """
    if target is LanguageCode.UND:
        raise ValueError("target language must not be 'und'")
    judgments = []
    for index, span in enumerate(segment_lines(response_text)):
        if count_units(span.text, target) <= guard_units:
            judgments.append(LineJudgment(index, LineStatus.SKIPPED, LanguageCode.UND, 0.0))
            continue
        prediction = lid.predict_line(span.text, response_id, index)
        if prediction.language is LanguageCode.UND:
            judgments.append(
                LineJudgment(index, LineStatus.SKIPPED, LanguageCode.UND, prediction.confidence)
            )
        elif prediction.language is target:
            judgments.append(
                LineJudgment(index, LineStatus.PASSED, prediction.language, prediction.confidence)
            )
        else:
            judgments.append(
                LineJudgment(index, LineStatus.FAILED, prediction.language, prediction.confidence)
            )
    return judgments


def _require_no_line_failures(judgments: list[LineJudgment] | None) -> None:
    if judgments and any(j.status is LineStatus.FAILED for j in judgments):
        raise ValueError("word detection only runs on responses without line errors")


def detect_word_confusion_nonlatin(
    response_text: str,
    target: LanguageCode,
    dictionary: EnglishWordDictionary,
    judgments: list[LineJudgment] | None = None,
) -> list[WordFlag]:
    """Flag isolated English dictionary words inside a non-Latin-script response.

    A Latin run is flagged only when it is all-lowercase (capitalized runs
    are usually acronyms or proper nouns), at least two characters long, and
    present in the dictionary. Callers must not pass responses with
    line-level failures; ``judgments``, when given, enforces that.
    """
    if target not in NON_LATIN_SCRIPT_LANGUAGES:
        raise ValueError(f"{target} is not a non-Latin-script target")
    _require_no_line_failures(judgments)
    lines = segment_lines(response_text)
    flags = []
    for run in latin_runs(response_text):
        if len(run.text) < MIN_FLAG_LENGTH or not run.text.islower():
            continue
        if run.text not in dictionary:
            continue
        flags.append(
            WordFlag(
                line_index=line_index_of(lines, run.start),
                span=run,
                token=run.text,
                reason=FlagReason.DICTIONARY_ENGLISH_WORD,
            )
        )
    return flags


def detect_word_confusion_latin(
    response_text: str,
    target: LanguageCode,
    judgments: list[LineJudgment] | None = None,
) -> list[WordFlag]:
    """Flag whitespace tokens containing letters from a non-Latin script.

    The rule does not depend on which Latin-script language is targeted;
    Common characters (digits, punctuation) never trigger a flag.
    """
    if target not in LATIN_SCRIPT_LANGUAGES:
        raise ValueError(f"{target} is not a Latin-script target")
    _require_no_line_failures(judgments)
    lines = segment_lines(response_text)
    flags = []
    start = None
    for offset, ch in enumerate(response_text + " "):
        if not ch.isspace():
            if start is None:
                start = offset
            continue
        if start is not None:
            token = response_text[start:offset]
            if any(
                script_of_char(c) not in (ScriptClass.LATIN, ScriptClass.COMMON) for c in token
            ):
                span = TokenSpan(start, offset, token)
                flags.append(
                    WordFlag(
                        line_index=line_index_of(lines, start),
                        span=span,
                        token=token,
                        reason=FlagReason.FOREIGN_SCRIPT_LETTER,
                    )
                )
            start = None
    return flags


def detect(
    response_text: str,
    target: LanguageCode,
    lid: LineLid,
    dictionary: EnglishWordDictionary,
    response_id: str = "",
    guard_units: int = DEFAULT_GUARD_UNITS,
    tags: dict[str, str] | None = None,
) -> DetectionRecord:
    """Full per-response verdict: line detection, then word detection.

    Word detection runs only when the response has no line-level error, so a
    record never carries both error kinds at once.
    """
    judgments = detect_line_confusion(response_text, target, lid, guard_units, response_id)
    has_line_error = any(j.status is LineStatus.FAILED for j in judgments)
    word_flags: list[WordFlag] = []
    if not has_line_error:
        if target in NON_LATIN_SCRIPT_LANGUAGES:
            word_flags = detect_word_confusion_nonlatin(response_text, target, dictionary, judgments)
        else:
            word_flags = detect_word_confusion_latin(response_text, target, judgments)
    return DetectionRecord(
        response_id=response_id,
        target=target,
        line_judgments=judgments,
        word_flags=word_flags,
        has_line_error=has_line_error,
        has_word_error=bool(word_flags),
        skipped_only=all(j.status is LineStatus.SKIPPED for j in judgments),
        tags=dict(tags or {}),
    )
