"""Access to the data files bundled with the package."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from langconfusion.detectors import EnglishWordDictionary, load_dictionary
from langconfusion.langcore import LanguageCode
from langconfusion.lid import load_training_corpus


def _data_path(name: str) -> Path:
    return Path(resources.files("langconfusion").joinpath("data", name))


def default_dictionary_path() -> Path:
    return _data_path("english_words.txt")


def default_dictionary() -> EnglishWordDictionary:
    return load_dictionary(default_dictionary_path())


def mini_corpus_path() -> Path:
    return _data_path("mini_corpus.tsv")


def mini_corpus() -> list[tuple[LanguageCode, str]]:
    return load_training_corpus(mini_corpus_path())


def instruction_templates_path() -> Path:
    return _data_path("instruction_templates.txt")


def quick_brown_fox_lm_path() -> Path:
    return _data_path("toylm_quick_brown_fox.json")
