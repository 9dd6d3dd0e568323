"""Language registry, Unicode script classes, and line/token segmentation.

Everything downstream (LID, detectors, metrics) builds on the primitives in
this module. All functions here are pure and safe to call concurrently.

Script classification relies on the Unicode Character Database shipped with
CPython's ``unicodedata`` (Unicode 13.0.0 on Python 3.10).
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from math import ceil


class LanguageCode(str, Enum):
    """The supported languages plus ``und`` for undetermined text."""

    AR = "ar"
    DE = "de"
    EN = "en"
    ES = "es"
    FR = "fr"
    HI = "hi"
    ID = "id"
    IT = "it"
    JA = "ja"
    KO = "ko"
    PT = "pt"
    RU = "ru"
    TR = "tr"
    VI = "vi"
    ZH = "zh"
    UND = "und"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, code: str) -> "LanguageCode":
        try:
            return cls(code)
        except ValueError:
            raise UnknownLanguageError(code) from None


class UnknownLanguageError(ValueError):
    def __init__(self, code: str):
        super().__init__(f"unknown language code: {code!r}")
        self.code = code


#: Languages written (primarily) in Latin script.
LATIN_SCRIPT_LANGUAGES = frozenset(
    {
        LanguageCode.DE,
        LanguageCode.EN,
        LanguageCode.ES,
        LanguageCode.FR,
        LanguageCode.ID,
        LanguageCode.IT,
        LanguageCode.PT,
        LanguageCode.TR,
        LanguageCode.VI,
    }
)

#: Languages written in non-Latin scripts (word-level detection uses the
#: English-dictionary rule for these).
NON_LATIN_SCRIPT_LANGUAGES = frozenset(
    {
        LanguageCode.AR,
        LanguageCode.HI,
        LanguageCode.JA,
        LanguageCode.KO,
        LanguageCode.RU,
        LanguageCode.ZH,
    }
)

ALL_LANGUAGES = tuple(sorted(LATIN_SCRIPT_LANGUAGES | NON_LATIN_SCRIPT_LANGUAGES, key=lambda l: l.value))


class ScriptClass(Enum):
    """Coarse script classes. Non-letters always map to COMMON."""

    LATIN = "Latin"
    ARABIC = "Arabic"
    DEVANAGARI = "Devanagari"
    CYRILLIC = "Cyrillic"
    HANGUL = "Hangul"
    HAN = "Han"
    KANA = "Kana"
    COMMON = "Common"
    OTHER = "Other"


@dataclass(frozen=True)
class ScriptProfile:
    """Which script classes a language's text is written in."""

    language: LanguageCode
    writing_system: frozenset[ScriptClass]
    latin_script: bool


_PROFILES: dict[LanguageCode, ScriptProfile] = {}


def _register_profile(lang: LanguageCode, scripts: set[ScriptClass]) -> None:
    _PROFILES[lang] = ScriptProfile(
        language=lang,
        writing_system=frozenset(scripts | {ScriptClass.COMMON}),
        latin_script=lang in LATIN_SCRIPT_LANGUAGES,
    )


for _l in LATIN_SCRIPT_LANGUAGES:
    _register_profile(_l, {ScriptClass.LATIN})
_register_profile(LanguageCode.AR, {ScriptClass.ARABIC})
_register_profile(LanguageCode.HI, {ScriptClass.DEVANAGARI})
_register_profile(LanguageCode.RU, {ScriptClass.CYRILLIC})
_register_profile(LanguageCode.KO, {ScriptClass.HANGUL})
_register_profile(LanguageCode.ZH, {ScriptClass.HAN})
_register_profile(LanguageCode.JA, {ScriptClass.KANA, ScriptClass.HAN})


def script_profile(lang: LanguageCode) -> ScriptProfile:
    if lang is LanguageCode.UND:
        raise ValueError("no script profile for 'und'")
    return _PROFILES[lang]


# Mapping from unicodedata.name() prefixes to script classes. Name prefixes
# are stable across UCD versions for the blocks we care about.
_NAME_PREFIXES: tuple[tuple[str, ScriptClass], ...] = (
    ("LATIN", ScriptClass.LATIN),
    ("ARABIC", ScriptClass.ARABIC),
    ("DEVANAGARI", ScriptClass.DEVANAGARI),
    ("CYRILLIC", ScriptClass.CYRILLIC),
    ("HANGUL", ScriptClass.HANGUL),
    ("CJK", ScriptClass.HAN),
    ("KANGXI", ScriptClass.HAN),
    ("HIRAGANA", ScriptClass.KANA),
    ("KATAKANA", ScriptClass.KANA),
)


@lru_cache(maxsize=None)
def script_of_char(ch: str) -> ScriptClass:
    """Classify a single character. Total: never raises on any scalar.

    Letters are classified by their Unicode script; everything else
    (digits, whitespace, punctuation, symbols, emoji) is COMMON.
    """
    if len(ch) != 1:
        raise ValueError("script_of_char expects a single character")
    if not unicodedata.category(ch).startswith("L"):
        return ScriptClass.COMMON
    try:
        name = unicodedata.name(ch)
    except ValueError:
        return ScriptClass.OTHER
    for prefix, script in _NAME_PREFIXES:
        if name.startswith(prefix):
            return script
    return ScriptClass.OTHER


@dataclass(frozen=True)
class TokenSpan:
    """A slice of a parent text. Offsets are character offsets."""

    start: int
    end: int
    text: str

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid span offsets: [{self.start}, {self.end})")


_LINE_BREAK = re.compile(r"\r\n|\n")


def segment_lines(text: str) -> list[TokenSpan]:
    """Split text into line spans. CRLF counts as one break.

    Blank and whitespace-only lines are dropped; spans never overlap and are
    ordered by start offset. Span text excludes the line terminator.
    """
    spans: list[TokenSpan] = []
    pos = 0
    for match in _LINE_BREAK.finditer(text):
        _append_line(spans, text, pos, match.start())
        pos = match.end()
    _append_line(spans, text, pos, len(text))
    return spans


def _append_line(spans: list[TokenSpan], text: str, start: int, end: int) -> None:
    if end > start and text[start:end].strip():
        spans.append(TokenSpan(start, end, text[start:end]))


def count_units(line: str, lang: LanguageCode) -> int:
    """Length of a line in word-like units.

    Whitespace-delimited languages count whitespace tokens. Chinese and
    Japanese have no whitespace word boundaries, so two Han/Kana characters
    count as roughly one unit; the whitespace-token count acts as a floor for
    mixed-script lines.
    """
    ws_tokens = len(line.split())
    if lang in (LanguageCode.JA, LanguageCode.ZH):
        cjk_chars = sum(
            1 for ch in line if script_of_char(ch) in (ScriptClass.HAN, ScriptClass.KANA)
        )
        return max(ws_tokens, ceil(cjk_chars / 2))
    return ws_tokens


_ASCII_RUN = re.compile(r"[A-Za-z]+")
_URLISH = re.compile(r"\S*(?:://|@)\S*")


def latin_runs(text: str) -> list[TokenSpan]:
    """Maximal runs of ASCII letters, excluding runs inside URLs or emails.

    A run is excluded when it falls inside a whitespace-delimited token
    containing ``://`` or ``@``.
    """
    excluded: list[tuple[int, int]] = [m.span() for m in _URLISH.finditer(text)]
    runs: list[TokenSpan] = []
    for match in _ASCII_RUN.finditer(text):
        start, end = match.span()
        if any(ex_start <= start and end <= ex_end for ex_start, ex_end in excluded):
            continue
        runs.append(TokenSpan(start, end, match.group()))
    return runs


def line_index_of(spans: list[TokenSpan], offset: int) -> int:
    """Index of the line span containing a character offset, or -1."""
    for i, span in enumerate(spans):
        if span.start <= offset < span.end:
            return i
    return -1
