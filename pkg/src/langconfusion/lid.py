"""Line-level language identification.

A self-contained character n-gram Naive Bayes classifier plus an adapter for
predictions produced by an external LID tool. Models are immutable once
trained or loaded; ``predict`` is pure, so sharing a model across threads is
safe.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import struct
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from langconfusion.langcore import (
    LanguageCode,
    ScriptClass,
    UnknownLanguageError,
    script_of_char,
)

FORMAT_VERSION = 1
_MAGIC = b"NGLID"

#: Below this winner confidence the classifier abstains and returns ``und``.
DEFAULT_CONFIDENCE_THRESHOLD = 0.5


class LidTrainingError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


class PredictionFileError(ValueError):
    pass


@dataclass(frozen=True)
class LidPrediction:
    language: LanguageCode
    confidence: float


@dataclass(frozen=True)
class LidConfig:
    n_min: int = 1
    n_max: int = 3
    alpha: float = 0.5
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD

    def __post_init__(self) -> None:
        if not (1 <= self.n_min <= self.n_max):
            raise ValueError("need 1 <= n_min <= n_max")
        if self.alpha <= 0:
            raise ValueError("smoothing alpha must be positive")


_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """NFC + casefold + whitespace collapsing, applied before featurization."""
    return _WS.sub(" ", unicodedata.normalize("NFC", text).casefold()).strip()


def char_ngrams(text: str, n_min: int, n_max: int) -> Counter[str]:
    counts: Counter[str] = Counter()
    for n in range(n_min, n_max + 1):
        for i in range(len(text) - n + 1):
            counts[text[i : i + n]] += 1
    return counts


@dataclass(frozen=True)
class NGramLidModel:
    """Smoothed per-language n-gram log-likelihoods plus log-priors.

    The event space of each n-gram order is the set of grams observed across
    all training languages plus a single out-of-vocabulary bucket, so the
    smoothed likelihoods of every (language, order) pair sum to one.
    """

    languages: tuple[LanguageCode, ...]
    config: LidConfig
    log_priors: dict[LanguageCode, float]
    log_likelihood: dict[tuple[LanguageCode, str], float]
    log_oov: dict[tuple[LanguageCode, int], float]
    event_space_sizes: dict[int, int]
    format_version: int = FORMAT_VERSION

    def predict_line(self, text: str, response_id: str = "", line_index: int = 0) -> LidPrediction:
        return predict(self, text)


def train(corpus: list[tuple[LanguageCode, str]], config: LidConfig | None = None) -> NGramLidModel:
    """Train from (language, text) samples. Order-insensitive and deterministic."""
    config = config or LidConfig()
    if not corpus:
        raise LidTrainingError("empty training corpus")

    gram_counts: dict[LanguageCode, Counter[str]] = {}
    sample_counts: Counter[LanguageCode] = Counter()
    for lang, text in corpus:
        if lang is LanguageCode.UND:
            raise LidTrainingError("cannot train on 'und' samples")
        normalized = normalize_text(text)
        counts = gram_counts.setdefault(lang, Counter())
        counts.update(char_ngrams(normalized, config.n_min, config.n_max))
        sample_counts[lang] += 1

    languages = tuple(sorted(gram_counts, key=lambda l: l.value))
    for lang in languages:
        if not gram_counts[lang]:
            raise LidTrainingError(f"language {lang} has no usable characters")

    # Global event space per order: grams seen in any language, plus one OOV slot.
    vocab_by_order: dict[int, set[str]] = {n: set() for n in range(config.n_min, config.n_max + 1)}
    for counts in gram_counts.values():
        for gram in counts:
            vocab_by_order[len(gram)].add(gram)
    event_space_sizes = {n: len(v) + 1 for n, v in vocab_by_order.items()}

    total_samples = sum(sample_counts.values())
    log_priors = {
        lang: math.log(sample_counts[lang] / total_samples) for lang in languages
    }

    alpha = config.alpha
    log_likelihood: dict[tuple[LanguageCode, str], float] = {}
    log_oov: dict[tuple[LanguageCode, int], float] = {}
    for lang in languages:
        counts = gram_counts[lang]
        totals: Counter[int] = Counter()
        for gram, c in counts.items():
            totals[len(gram)] += c
        for n in range(config.n_min, config.n_max + 1):
            denom = totals[n] + alpha * event_space_sizes[n]
            log_oov[(lang, n)] = math.log(alpha / denom)
        for gram in sorted(counts):
            n = len(gram)
            denom = totals[n] + alpha * event_space_sizes[n]
            log_likelihood[(lang, gram)] = math.log((counts[gram] + alpha) / denom)

    return NGramLidModel(
        languages=languages,
        config=config,
        log_priors=log_priors,
        log_likelihood=log_likelihood,
        log_oov=log_oov,
        event_space_sizes=event_space_sizes,
    )


def _has_letters(text: str) -> bool:
    return any(script_of_char(ch) is not ScriptClass.COMMON for ch in text)


def posteriors(model: NGramLidModel, text: str) -> dict[LanguageCode, float]:
    """Normalized posterior over the model's languages for non-empty text."""
    normalized = normalize_text(text)
    grams = char_ngrams(normalized, model.config.n_min, model.config.n_max)
    scores: dict[LanguageCode, float] = {}
    for lang in model.languages:
        score = model.log_priors[lang]
        for gram, count in grams.items():
            logp = model.log_likelihood.get((lang, gram))
            if logp is None:
                logp = model.log_oov[(lang, len(gram))]
            score += count * logp
        scores[lang] = score
    peak = max(scores.values())
    norm = math.log(sum(math.exp(s - peak) for s in scores.values())) + peak
    return {lang: math.exp(s - norm) for lang, s in scores.items()}


def predict(model: NGramLidModel, text: str) -> LidPrediction:
    """Argmax of the smoothed posterior. Ties break to the lowest language code.

    Returns ``und`` with confidence 0.0 for empty or letterless text, and
    ``und`` with the winner's confidence when it falls below the model's
    abstention threshold.
    """
    if not text or not _has_letters(text):
        return LidPrediction(LanguageCode.UND, 0.0)
    post = posteriors(model, text)
    winner = min(post, key=lambda lang: (-post[lang], lang.value))
    confidence = post[winner]
    if confidence < model.config.confidence_threshold:
        return LidPrediction(LanguageCode.UND, confidence)
    return LidPrediction(winner, confidence)


def _payload(model: NGramLidModel) -> bytes:
    doc = {
        "languages": [l.value for l in model.languages],
        "n_min": model.config.n_min,
        "n_max": model.config.n_max,
        "alpha": model.config.alpha,
        "confidence_threshold": model.config.confidence_threshold,
        "event_space_sizes": {str(n): v for n, v in sorted(model.event_space_sizes.items())},
        "log_priors": {l.value: p for l, p in sorted(model.log_priors.items(), key=lambda kv: kv[0].value)},
        "log_oov": [
            [lang.value, n, value]
            for (lang, n), value in sorted(model.log_oov.items(), key=lambda kv: (kv[0][0].value, kv[0][1]))
        ],
        "log_likelihood": [
            [lang.value, gram, value]
            for (lang, gram), value in sorted(model.log_likelihood.items(), key=lambda kv: (kv[0][0].value, kv[0][1]))
        ],
    }
    return json.dumps(doc, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_model(model: NGramLidModel, path: str | Path) -> None:
    """Write the versioned binary model file (magic, version, checksum, payload)."""
    payload = _payload(model)
    digest = hashlib.sha256(payload).digest()
    header = _MAGIC + struct.pack(">I", model.format_version) + digest
    Path(path).write_bytes(header + payload)


def load_model(path: str | Path) -> NGramLidModel:
    blob = Path(path).read_bytes()
    if len(blob) < len(_MAGIC) + 4 + 32 or not blob.startswith(_MAGIC):
        raise ModelFormatError(f"{path}: not an NGLID model file")
    offset = len(_MAGIC)
    (version,) = struct.unpack(">I", blob[offset : offset + 4])
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    offset += 4
    digest = blob[offset : offset + 32]
    payload = blob[offset + 32 :]
    if hashlib.sha256(payload).digest() != digest:
        raise ModelFormatError(f"{path}: checksum mismatch")
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt payload: {exc}") from exc

    config = LidConfig(
        n_min=doc["n_min"],
        n_max=doc["n_max"],
        alpha=doc["alpha"],
        confidence_threshold=doc["confidence_threshold"],
    )
    return NGramLidModel(
        languages=tuple(LanguageCode.parse(c) for c in doc["languages"]),
        config=config,
        log_priors={LanguageCode.parse(c): p for c, p in doc["log_priors"].items()},
        log_likelihood={
            (LanguageCode.parse(lang), gram): value for lang, gram, value in doc["log_likelihood"]
        },
        log_oov={(LanguageCode.parse(lang), n): value for lang, n, value in doc["log_oov"]},
        event_space_sizes={int(n): v for n, v in doc["event_space_sizes"].items()},
        format_version=version,
    )


@dataclass
class ExternalPredictions:
    """Per-line predictions produced by an external LID tool.

    Plugs into the detectors anywhere an :class:`NGramLidModel` is accepted.
    Missing keys are an error: the file must cover every judged line.
    """

    by_line: dict[tuple[str, int], LidPrediction] = field(default_factory=dict)

    def predict_line(self, text: str, response_id: str = "", line_index: int = 0) -> LidPrediction:
        key = (response_id, line_index)
        if key not in self.by_line:
            raise KeyError(
                f"no external prediction for response {response_id!r} line {line_index}"
            )
        return self.by_line[key]


def load_external_predictions(path: str | Path) -> ExternalPredictions:
    """Load tab-separated rows: response_id, line_index, lang, confidence."""
    by_line: dict[tuple[str, int], LidPrediction] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise PredictionFileError(f"{path}:{lineno}: expected 4 tab-separated columns")
            response_id, index_text, lang_text, conf_text = parts
            try:
                index = int(index_text)
                lang = LanguageCode.parse(lang_text)
                confidence = float(conf_text)
            except (ValueError, UnknownLanguageError) as exc:
                raise PredictionFileError(f"{path}:{lineno}: {exc}") from exc
            if not (0.0 <= confidence <= 1.0):
                raise PredictionFileError(f"{path}:{lineno}: confidence {confidence} outside [0,1]")
            key = (response_id, index)
            if key in by_line:
                raise PredictionFileError(f"{path}:{lineno}: duplicate key {key}")
            by_line[key] = LidPrediction(lang, confidence)
    return ExternalPredictions(by_line)


def load_training_corpus(path: str | Path) -> list[tuple[LanguageCode, str]]:
    """Load tab-separated training samples: lang<TAB>text, one per line."""
    samples: list[tuple[LanguageCode, str]] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            try:
                lang_text, text = line.split("\t", 1)
                samples.append((LanguageCode.parse(lang_text), text))
            except (ValueError, UnknownLanguageError) as exc:
                raise LidTrainingError(f"{path}:{lineno}: {exc}") from exc
    return samples
