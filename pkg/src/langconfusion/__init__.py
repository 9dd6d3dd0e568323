"""Toolkit for detecting and measuring language confusion in LLM outputs."""

from langconfusion.langcore import (
    LanguageCode,
    ScriptClass,
    ScriptProfile,
    TokenSpan,
    count_units,
    latin_runs,
    script_of_char,
    script_profile,
    segment_lines,
)

__all__ = [
    "LanguageCode",
    "ScriptClass",
    "ScriptProfile",
    "TokenSpan",
    "count_units",
    "latin_runs",
    "script_of_char",
    "script_profile",
    "segment_lines",
]

__version__ = "0.1.0"
