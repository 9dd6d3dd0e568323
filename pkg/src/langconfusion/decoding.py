"""Reference decoding over a table-driven toy LM, plus trace analysis.

Implements nucleus sampling with temperature (top-k cut, then temperature
softmax, then minimal nucleus, then renormalized draw), greedy and beam
search decoding, Shannon entropy, and confusion-point statistics over
decoding traces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from langconfusion.detectors import EnglishWordDictionary
from langconfusion.langcore import (
    NON_LATIN_SCRIPT_LANGUAGES,
    LanguageCode,
    ScriptClass,
    script_of_char,
)

DEFAULT_MAX_TOKENS = 100

_DISTRIBUTION_TOLERANCE = 1e-6


class InvalidDistributionError(ValueError):
    pass


class MissingContextError(KeyError):
    pass


class MisalignedTraceError(ValueError):
    pass


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 0.3
    top_p: float = 0.75
    top_k: int | None = None
    seed: int = 0
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0.0 < self.top_p <= 1.0):
            raise ValueError("top_p must be in (0, 1]")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    def as_dict(self) -> dict:
        doc = {
            "temperature": self.temperature,
            "top_p": self.top_p,
            "seed": self.seed,
            "max_tokens": self.max_tokens,
        }
        if self.top_k is not None:
            doc["top_k"] = self.top_k
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SamplingConfig":
        return cls(
            temperature=doc.get("temperature", 0.3),
            top_p=doc.get("top_p", 0.75),
            top_k=doc.get("top_k"),
            seed=doc.get("seed", 0),
            max_tokens=doc.get("max_tokens", DEFAULT_MAX_TOKENS),
        )


def softmax_t(logits: Sequence[float], temperature: float) -> np.ndarray:
    """Temperature softmax with max-subtraction for stability.

    ``temperature == 0`` returns the greedy limit: a one-hot at the argmax,
    ties resolved to the lowest index.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0:
        raise InvalidDistributionError("empty logit vector")
    if np.isnan(z).any():
        raise InvalidDistributionError("NaN in logits")
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    if temperature == 0.0:
        one_hot = np.zeros_like(z)
        one_hot[int(np.argmax(z))] = 1.0
        return one_hot
    shifted = (z - z.max()) / temperature
    weights = np.exp(shifted)
    return weights / weights.sum()


def _check_distribution(probs: np.ndarray) -> None:
    if probs.size == 0:
        raise InvalidDistributionError("empty distribution")
    if np.isnan(probs).any() or (probs < 0).any():
        raise InvalidDistributionError("negative or NaN probabilities")
    if abs(float(probs.sum()) - 1.0) > _DISTRIBUTION_TOLERANCE:
        raise InvalidDistributionError(f"probabilities sum to {float(probs.sum())}, not 1")


def nucleus(probs: Sequence[float], p: float) -> list[int]:
    """Smallest set of indices whose summed probability reaches ``p``.

    Indices come back in descending probability order, ties broken toward
    the lower index.
    """
    if not (0.0 < p <= 1.0):
        raise ValueError("p must be in (0, 1]")
    array = np.asarray(probs, dtype=np.float64)
    _check_distribution(array)
    order = sorted(range(array.size), key=lambda i: (-array[i], i))
    total = 0.0
    chosen: list[int] = []
    for index in order:
        chosen.append(index)
        total += float(array[index])
        if total >= p:
            return chosen
    return chosen  # float shortfall near p == 1: the nucleus is everything


def entropy(probs: Sequence[float], base: float | None = None) -> float:
    """Shannon entropy, in nats unless ``base`` is given. 0*log(0) counts as 0."""
    array = np.asarray(probs, dtype=np.float64)
    _check_distribution(array)
    positive = array[array > 0]
    value = float(-(positive * np.log(positive)).sum())
    if base is not None:
        value /= math.log(base)
    return value


@dataclass(frozen=True)
class StepRecord:
    """One decoding step: the pre-nucleus candidate distribution and the draw.

    ``sampled`` indexes into ``candidates``, which keeps the record
    self-contained even when an API returned only the top-N candidates.
    """

    candidates: tuple[tuple[str, float], ...]
    sampled: int

    def __post_init__(self) -> None:
        if not (0 <= self.sampled < len(self.candidates)):
            raise ValueError("sampled index outside candidate list")
        total = sum(p for _, p in self.candidates)
        if total > 1.0 + 1e-9:
            raise InvalidDistributionError(f"candidate probabilities sum to {total} > 1")

    @property
    def sampled_token(self) -> str:
        return self.candidates[self.sampled][0]


@dataclass
class StepTrace:
    steps: list[StepRecord] = field(default_factory=list)
    #: True when candidates are top-N rather than the full distribution;
    #: nucleus sizes computed from such a trace are lower bounds.
    truncated: bool = False

    def tokens(self) -> list[str]:
        return [step.sampled_token for step in self.steps]


def step_distribution(step: StepRecord) -> np.ndarray:
    """Candidate probabilities renormalized to a proper distribution."""
    probs = np.asarray([p for _, p in step.candidates], dtype=np.float64)
    total = probs.sum()
    if total <= 0:
        raise InvalidDistributionError("step has no probability mass")
    return probs / total


@dataclass(frozen=True)
class StepDistribution:
    """Pre-sampling view of one step after top-k, softmax, and nucleus cut."""

    candidate_indices: list[int]  # vocabulary indices surviving top-k, ascending
    probs: np.ndarray  # pre-nucleus probabilities over candidate_indices
    nucleus_indices: list[int]  # vocabulary indices in the nucleus, by probability
    nucleus_probs: np.ndarray  # renormalized, aligned with nucleus_indices


def nucleus_distribution(logits: Sequence[float], config: SamplingConfig) -> StepDistribution:
    """Apply top-k, temperature softmax, and the nucleus cut to raw logits."""
    z = np.asarray(logits, dtype=np.float64)
    if config.top_k is not None and config.top_k < z.size:
        candidate_indices = sorted(
            sorted(range(z.size), key=lambda i: (-z[i], i))[: config.top_k]
        )
    else:
        candidate_indices = list(range(z.size))
    probs = softmax_t(z[candidate_indices], config.temperature)
    in_nucleus = nucleus(probs, config.top_p)
    nucleus_probs = probs[in_nucleus]
    return StepDistribution(
        candidate_indices=candidate_indices,
        probs=probs,
        nucleus_indices=[candidate_indices[i] for i in in_nucleus],
        nucleus_probs=nucleus_probs / nucleus_probs.sum(),
    )


def sample_step(
    logits: Sequence[float],
    config: SamplingConfig,
    rng: np.random.Generator,
    tokens: Sequence[str] | None = None,
) -> tuple[int, StepRecord]:
    """Draw one token. Returns (vocabulary index, step record).

    The record keeps the full pre-nucleus candidate distribution; the draw
    itself happens over the renormalized nucleus.
    """
    dist = nucleus_distribution(logits, config)
    chosen_vocab = int(
        dist.nucleus_indices[int(rng.choice(len(dist.nucleus_indices), p=dist.nucleus_probs))]
    )
    labels = tokens if tokens is not None else [str(i) for i in range(len(logits))]
    record = StepRecord(
        candidates=tuple(
            (labels[i], float(dist.probs[pos])) for pos, i in enumerate(dist.candidate_indices)
        ),
        sampled=dist.candidate_indices.index(chosen_vocab),
    )
    return chosen_vocab, record


@dataclass
class ToyLM:
    """Table-driven language model: explicit logits for every known context."""

    vocabulary: list[str]
    rows: dict[tuple[str, ...], list[float]]
    end_token: str

    def __post_init__(self) -> None:
        if self.end_token not in self.vocabulary:
            raise ValueError("end token missing from vocabulary")
        for context, logits in self.rows.items():
            if len(logits) != len(self.vocabulary):
                raise ValueError(
                    f"row {context!r} has {len(logits)} logits for "
                    f"{len(self.vocabulary)} vocabulary tokens"
                )

    def logits_for(self, context: Sequence[str]) -> list[float]:
        key = tuple(context)
        if key not in self.rows:
            raise MissingContextError(f"no table row for context {key!r}")
        return self.rows[key]

    @property
    def end_index(self) -> int:
        return self.vocabulary.index(self.end_token)


def load_toylm(path: str | Path) -> ToyLM:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return ToyLM(
        vocabulary=list(doc["vocabulary"]),
        rows={tuple(row["context"]): list(row["logits"]) for row in doc["rows"]},
        end_token=doc["end_token"],
    )


def save_toylm(lm: ToyLM, path: str | Path) -> None:
    doc = {
        "vocabulary": lm.vocabulary,
        "end_token": lm.end_token,
        "rows": [
            {"context": list(context), "logits": logits}
            for context, logits in sorted(lm.rows.items())
        ],
    }
    Path(path).write_text(json.dumps(doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def generate(
    lm: ToyLM, prompt: Sequence[str], config: SamplingConfig
) -> tuple[list[str], StepTrace]:
    """Sample until the end token or ``max_tokens``. Same seed, same output.

    The trace holds one step per emitted token; sampling the end token stops
    generation without emitting it.
    """
    rng = np.random.default_rng(config.seed)
    context = list(prompt)
    emitted: list[str] = []
    trace = StepTrace()
    for _ in range(config.max_tokens):
        logits = lm.logits_for(context)
        vocab_index, record = sample_step(logits, config, rng, tokens=lm.vocabulary)
        token = lm.vocabulary[vocab_index]
        if token == lm.end_token:
            break
        emitted.append(token)
        trace.steps.append(record)
        context.append(token)
    return emitted, trace


def _log_probs(logits: Sequence[float]) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max()
    return shifted - math.log(float(np.exp(shifted).sum()))


@dataclass(frozen=True)
class BeamHypothesis:
    tokens: tuple[str, ...]
    token_indices: tuple[int, ...]
    score: float
    finished: bool


def beam_search(
    lm: ToyLM,
    prompt: Sequence[str],
    beam_size: int,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    length_normalize: bool = False,
) -> list[BeamHypothesis]:
    """Deterministic beam search over the LM's T=1 distribution.

    Ties break by the emitted token-index sequence, so results never depend
    on dict or sort internals. ``beam_size=1`` is greedy decoding. Scores are
    summed log-probabilities (optionally length-normalized at final ranking)
    and are non-increasing down the returned list.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    live = [BeamHypothesis(tokens=(), token_indices=(), score=0.0, finished=False)]
    done: list[BeamHypothesis] = []
    end_index = lm.end_index
    for _ in range(max_tokens):
        if not live:
            break
        candidates: list[BeamHypothesis] = []
        for beam in live:
            logp = _log_probs(lm.logits_for(list(prompt) + list(beam.tokens)))
            for index, token in enumerate(lm.vocabulary):
                if index == end_index:
                    candidates.append(
                        BeamHypothesis(
                            tokens=beam.tokens,
                            token_indices=beam.token_indices + (index,),
                            score=beam.score + float(logp[index]),
                            finished=True,
                        )
                    )
                else:
                    candidates.append(
                        BeamHypothesis(
                            tokens=beam.tokens + (token,),
                            token_indices=beam.token_indices + (index,),
                            score=beam.score + float(logp[index]),
                            finished=False,
                        )
                    )
        candidates.sort(key=lambda b: (-b.score, b.token_indices))
        selected = candidates[:beam_size]
        live = [b for b in selected if not b.finished]
        done.extend(b for b in selected if b.finished)
    done.extend(live)

    def rank_key(beam: BeamHypothesis):
        score = beam.score / max(len(beam.token_indices), 1) if length_normalize else beam.score
        return (-score, beam.token_indices)

    return sorted(done, key=rank_key)


def greedy(lm: ToyLM, prompt: Sequence[str], max_tokens: int = DEFAULT_MAX_TOKENS) -> list[str]:
    """Argmax decoding; ties go to the lowest vocabulary index."""
    return list(beam_search(lm, prompt, beam_size=1, max_tokens=max_tokens)[0].tokens)


def save_trace(trace: StepTrace, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for step in trace.steps:
            handle.write(
                json.dumps(
                    {
                        "candidates": [[token, prob] for token, prob in step.candidates],
                        "sampled": step.sampled,
                        "truncated": trace.truncated,
                    },
                    ensure_ascii=False,
                )
            )
            handle.write("\n")


def load_trace(path: str | Path) -> StepTrace:
    steps: list[StepRecord] = []
    truncated = False
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            if not raw.strip():
                continue
            try:
                doc = json.loads(raw)
                steps.append(
                    StepRecord(
                        candidates=tuple((t, p) for t, p in doc["candidates"]),
                        sampled=doc["sampled"],
                    )
                )
                truncated = truncated or bool(doc.get("truncated", False))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad trace step: {exc}") from exc
    return StepTrace(steps=steps, truncated=truncated)


def _strip_common(token: str) -> str:
    start = 0
    end = len(token)
    while start < end and script_of_char(token[start]) is ScriptClass.COMMON:
        start += 1
    while end > start and script_of_char(token[end - 1]) is ScriptClass.COMMON:
        end -= 1
    return token[start:end]


def _token_state(token: str) -> str:
    """'wrong' = only Latin letters, 'target' = any non-Latin letter, else 'neutral'."""
    scripts = {script_of_char(ch) for ch in token if script_of_char(ch) is not ScriptClass.COMMON}
    if not scripts:
        return "neutral"
    if scripts == {ScriptClass.LATIN}:
        return "wrong"
    return "target"


def _is_dictionary_word(token: str, dictionary: EnglishWordDictionary) -> bool:
    run = _strip_common(token)
    return (
        len(run) >= 2
        and run.isascii()
        and run.isalpha()
        and run.islower()
        and run in dictionary
    )


def find_confusion_points(
    trace: StepTrace,
    response_tokens: Sequence[str],
    target: LanguageCode,
    dictionary: EnglishWordDictionary,
    annotations: Sequence[int] | None = None,
) -> list[int]:
    """Step indices where a wrong-language region begins.

    Heuristic scope is non-Latin targets: a confusion point is the first step
    of a run of Latin-letter tokens, where either the run continues past one
    token or its single token passes the English-dictionary rule (lowercase,
    length >= 2, in the dictionary). Isolated capitalized runs, e.g.
    acronyms, are not confusion points. A manual annotation list overrides
    the heuristic entirely.
    """
    if len(trace.steps) != len(response_tokens):
        raise MisalignedTraceError(
            f"trace has {len(trace.steps)} steps for {len(response_tokens)} tokens"
        )
    for step, token in zip(trace.steps, response_tokens):
        if step.sampled_token != token:
            raise MisalignedTraceError(
                f"trace token {step.sampled_token!r} does not match response token {token!r}"
            )
    if annotations is not None:
        positions = sorted(set(int(i) for i in annotations))
        for position in positions:
            if not (0 <= position < len(response_tokens)):
                raise MisalignedTraceError(f"annotated step {position} outside trace")
        return positions
    if target not in NON_LATIN_SCRIPT_LANGUAGES:
        raise ValueError(
            "automatic confusion-point detection covers non-Latin targets only; "
            "supply annotations for Latin targets"
        )

    cps: list[int] = []
    region_start: int | None = None
    region_wrong = 0

    def close_region() -> None:
        nonlocal region_start, region_wrong
        if region_start is not None:
            if region_wrong >= 2 or _is_dictionary_word(response_tokens[region_start], dictionary):
                cps.append(region_start)
        region_start = None
        region_wrong = 0

    for index, token in enumerate(response_tokens):
        state = _token_state(token)
        if state == "wrong":
            if region_start is None:
                region_start = index
            region_wrong += 1
        elif state == "target":
            close_region()
        # neutral tokens neither start nor close a region
    close_region()
    return cps


def load_cp_annotations(path: str | Path) -> dict[str, list[int]]:
    """Tab-separated override file: response_id, step_index."""
    annotations: dict[str, list[int]] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 tab-separated columns")
            try:
                annotations.setdefault(parts[0], []).append(int(parts[1]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return {rid: sorted(indices) for rid, indices in annotations.items()}


@dataclass(frozen=True)
class CpCells:
    """One row of the confusion-point matrix: overall / @CP / not-@CP averages.

    ``overall`` is derived from the two cells weighted by their step counts,
    so the weighted-average identity holds exactly. Empty-support cells are
    None.
    """

    overall: float | None
    at_cp: float | None
    not_at_cp: float | None
    n_at: int
    n_not: int


@dataclass
class CpReport:
    n_traces: int
    n_with_cp: int
    cp_positions: list[list[int]]
    avg_nucleus_size: dict[str, CpCells]
    avg_entropy: dict[str, CpCells]
    truncated_inputs: bool


def _cells(values_at: list[float], values_not: list[float]) -> CpCells:
    n_at, n_not = len(values_at), len(values_not)
    at = sum(values_at) / n_at if n_at else None
    not_at = sum(values_not) / n_not if n_not else None
    if n_at and n_not:
        overall = (at * n_at + not_at * n_not) / (n_at + n_not)
    elif n_at:
        overall = at
    elif n_not:
        overall = not_at
    else:
        overall = None
    return CpCells(overall=overall, at_cp=at, not_at_cp=not_at, n_at=n_at, n_not=n_not)


def cp_aggregate(
    traces: Sequence[StepTrace],
    cps: Sequence[Sequence[int]],
    config_p: float,
) -> CpReport:
    """Average nucleus size and entropy at and away from confusion points.

    Rows: traces with at least one CP, traces with none, and all traces.
    Nucleus sizes are computed from each step's candidate distribution at
    the given ``config_p``.
    """
    if len(traces) != len(cps):
        raise MisalignedTraceError("one CP list per trace required")
    sizes_at: dict[str, list[float]] = {"has_cp": [], "no_cp": []}
    sizes_not: dict[str, list[float]] = {"has_cp": [], "no_cp": []}
    entropies_at: dict[str, list[float]] = {"has_cp": [], "no_cp": []}
    entropies_not: dict[str, list[float]] = {"has_cp": [], "no_cp": []}
    n_with_cp = 0
    truncated = False
    for trace, trace_cps in zip(traces, cps):
        cp_set = set(trace_cps)
        for position in cp_set:
            if not (0 <= position < len(trace.steps)):
                raise MisalignedTraceError(f"CP index {position} outside trace")
        row = "has_cp" if cp_set else "no_cp"
        n_with_cp += bool(cp_set)
        truncated = truncated or trace.truncated
        for index, step in enumerate(trace.steps):
            probs = step_distribution(step)
            size = float(len(nucleus(probs, config_p)))
            ent = entropy(probs)
            if index in cp_set:
                sizes_at[row].append(size)
                entropies_at[row].append(ent)
            else:
                sizes_not[row].append(size)
                entropies_not[row].append(ent)

    def matrix(at: dict[str, list[float]], not_at: dict[str, list[float]]) -> dict[str, CpCells]:
        return {
            "has_cp": _cells(at["has_cp"], not_at["has_cp"]),
            "no_cp": _cells(at["no_cp"], not_at["no_cp"]),
            "all": _cells(at["has_cp"] + at["no_cp"], not_at["has_cp"] + not_at["no_cp"]),
        }

    return CpReport(
        n_traces=len(traces),
        n_with_cp=n_with_cp,
        cp_positions=[sorted(set(c)) for c in cps],
        avg_nucleus_size=matrix(sizes_at, sizes_not),
        avg_entropy=matrix(entropies_at, entropies_not),
        truncated_inputs=truncated,
    )


def cp_report_to_dict(report: CpReport) -> dict:
    def cells(c: CpCells) -> dict:
        return {
            "overall": c.overall,
            "at_cp": c.at_cp,
            "not_at_cp": c.not_at_cp,
            "n_at": c.n_at,
            "n_not": c.n_not,
        }

    return {
        "n_traces": report.n_traces,
        "n_with_cp": report.n_with_cp,
        "cp_positions": report.cp_positions,
        "avg_nucleus_size": {row: cells(c) for row, c in report.avg_nucleus_size.items()},
        "avg_entropy": {row: cells(c) for row, c in report.avg_entropy.items()},
        "truncated_inputs": report.truncated_inputs,
    }
