"""Pass-rate metrics over detection records, grouped aggregation, reports.

All ratios live in [0, 1]; rendering converts to percentages. Every function
here is pure and permutation-invariant over its input records.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from langconfusion.detectors import DetectionRecord, LineStatus

TAG_KEYS = ("model", "language", "dataset", "setting")
WILDCARD = "*"
AVG = "avg"


class EmptyRecordSetError(ValueError):
    pass


class MissingTagError(ValueError):
    pass


class UnknownFormatError(ValueError):
    pass


def lpr(records: Sequence[DetectionRecord]) -> float:
    """Fraction of responses with no line-level error."""
    if not records:
        raise EmptyRecordSetError("lpr over empty record set")
    return sum(1 for r in records if not r.has_line_error) / len(records)


def wpr(records: Sequence[DetectionRecord]) -> tuple[float, bool]:
    """Fraction of line-passing responses with no word-level error.

    When every response has a line error the denominator is empty; the value
    is then reported as 1.0 with ``defined=False`` so the degenerate case
    stays machine-visible.
    """
    if not records:
        raise EmptyRecordSetError("wpr over empty record set")
    passing = [r for r in records if not r.has_line_error]
    if not passing:
        return 1.0, False
    return sum(1 for r in passing if not r.has_word_error) / len(passing), True


def lcpr(lpr_value: float, wpr_value: float) -> float:
    """Harmonic mean of LPR and WPR; zero when either is zero."""
    if lpr_value == 0.0 or wpr_value == 0.0:
        return 0.0
    return 2.0 * lpr_value * wpr_value / (lpr_value + wpr_value)


def line_accuracy(records: Sequence[DetectionRecord]) -> float:
    """Fraction of judged (non-skipped) lines in the correct language."""
    if not records:
        raise EmptyRecordSetError("line_accuracy over empty record set")
    judged = 0
    passed = 0
    for record in records:
        for judgment in record.line_judgments:
            if judgment.status is LineStatus.SKIPPED:
                continue
            judged += 1
            if judgment.status is LineStatus.PASSED:
                passed += 1
    if judged == 0:
        raise EmptyRecordSetError("line_accuracy with zero judged lines")
    return passed / judged


@dataclass(frozen=True)
class GroupKey:
    model: str = WILDCARD
    language: str = WILDCARD
    dataset: str = WILDCARD
    setting: str = WILDCARD

    def as_tuple(self) -> tuple[str, str, str, str]:
        return (self.model, self.language, self.dataset, self.setting)


@dataclass(frozen=True)
class MetricFrame:
    group: GroupKey
    n_responses: int
    lpr: float
    wpr: float
    wpr_defined: bool
    lcpr: float
    line_accuracy: float
    line_accuracy_defined: bool


def _frame_for(group: GroupKey, records: Sequence[DetectionRecord]) -> MetricFrame:
    lpr_value = lpr(records)
    wpr_value, wpr_ok = wpr(records)
    try:
        acc = line_accuracy(records)
        acc_ok = True
    except EmptyRecordSetError:
        acc, acc_ok = 1.0, False
    return MetricFrame(
        group=group,
        n_responses=len(records),
        lpr=lpr_value,
        wpr=wpr_value,
        wpr_defined=wpr_ok,
        lcpr=lcpr(lpr_value, wpr_value),
        line_accuracy=acc,
        line_accuracy_defined=acc_ok,
    )


def aggregate(
    records: Sequence[DetectionRecord],
    group_by: Sequence[str] = ("model", "language"),
) -> list[MetricFrame]:
    """One frame per distinct grouping key, plus unweighted per-language
    average rows (language=``avg``) when grouping by language.

    Every record must carry tags for the grouped keys. Frames are sorted by
    their full key tuple.
    """
    if not records:
        raise EmptyRecordSetError("aggregate over empty record set")
    keys = tuple(group_by)
    for key in keys:
        if key not in TAG_KEYS:
            raise MissingTagError(f"unknown group-by key: {key!r}")

    groups: dict[GroupKey, list[DetectionRecord]] = {}
    for record in records:
        missing = [k for k in keys if k not in record.tags]
        if missing:
            raise MissingTagError(
                f"record {record.response_id!r} missing tags: {', '.join(missing)}"
            )
        group = GroupKey(**{k: record.tags[k] for k in keys})
        groups.setdefault(group, []).append(record)

    frames = [_frame_for(group, members) for group, members in groups.items()]

    if "language" in keys:
        by_rest: dict[tuple[str, str, str], list[MetricFrame]] = {}
        for frame in frames:
            rest = (frame.group.model, frame.group.dataset, frame.group.setting)
            by_rest.setdefault(rest, []).append(frame)
        for (model, dataset, setting), members in by_rest.items():
            frames.append(_average_frame(GroupKey(model, AVG, dataset, setting), members))

    frames.sort(key=lambda f: f.group.as_tuple())
    return frames


def _average_frame(group: GroupKey, members: list[MetricFrame]) -> MetricFrame:
    n = len(members)
    return MetricFrame(
        group=group,
        n_responses=sum(f.n_responses for f in members),
        lpr=sum(f.lpr for f in members) / n,
        wpr=sum(f.wpr for f in members) / n,
        wpr_defined=all(f.wpr_defined for f in members),
        lcpr=sum(f.lcpr for f in members) / n,
        line_accuracy=sum(f.line_accuracy for f in members) / n,
        line_accuracy_defined=all(f.line_accuracy_defined for f in members),
    )


def _pct(value: float) -> str:
    return f"{value * 100:.1f}"


def render_report(frames: Sequence[MetricFrame], fmt: str, metric: str = "lpr") -> str:
    """Render frames as ``csv``, ``md`` (markdown table), or ``json``.

    Tables show ratios as one-decimal percentages; JSON keeps full precision.
    Output is byte-deterministic for a fixed input.
    """
    if not frames:
        raise EmptyRecordSetError("render_report with no frames")
    if fmt == "csv":
        return _render_csv(frames)
    if fmt in ("md", "markdown", "markdown-table"):
        return _render_markdown(frames, metric)
    if fmt == "json":
        return _render_json(frames)
    raise UnknownFormatError(f"unknown report format: {fmt!r}")


def _render_csv(frames: Sequence[MetricFrame]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(
        [
            "model",
            "language",
            "dataset",
            "setting",
            "n_responses",
            "lpr",
            "wpr",
            "wpr_defined",
            "lcpr",
            "line_accuracy",
        ]
    )
    for frame in frames:
        writer.writerow(
            [
                *frame.group.as_tuple(),
                frame.n_responses,
                _pct(frame.lpr),
                _pct(frame.wpr),
                str(frame.wpr_defined).lower(),
                _pct(frame.lcpr),
                _pct(frame.line_accuracy),
            ]
        )
    return buffer.getvalue()


def _render_markdown(frames: Sequence[MetricFrame], metric: str) -> str:
    if metric not in ("lpr", "wpr", "lcpr", "line_accuracy"):
        raise UnknownFormatError(f"unknown metric for markdown table: {metric!r}")
    cells: dict[tuple[str, str], float] = {}
    models: list[str] = []
    languages: list[str] = []
    for frame in frames:
        key = (frame.group.model, frame.group.language)
        if key in cells:
            raise ValueError(
                f"multiple frames for model={key[0]!r} language={key[1]!r}; "
                "group by (model, language) before rendering markdown"
            )
        cells[key] = getattr(frame, metric)
        if key[0] not in models:
            models.append(key[0])
        if key[1] not in languages:
            languages.append(key[1])
    models.sort()
    languages = sorted(l for l in languages if l != AVG)
    columns = ([AVG] if any(k[1] == AVG for k in cells) else []) + languages

    lines = [
        "| model | " + " | ".join(columns) + " |",
        "|" + "---|" * (len(columns) + 1),
    ]
    for model in models:
        row = [model]
        for language in columns:
            value = cells.get((model, language))
            row.append(_pct(value) if value is not None else "-")
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def _render_json(frames: Sequence[MetricFrame]) -> str:
    payload = [
        {
            "model": frame.group.model,
            "language": frame.group.language,
            "dataset": frame.group.dataset,
            "setting": frame.group.setting,
            "n_responses": frame.n_responses,
            "lpr": frame.lpr,
            "wpr": frame.wpr,
            "wpr_defined": frame.wpr_defined,
            "lcpr": frame.lcpr,
            "line_accuracy": frame.line_accuracy,
            "line_accuracy_defined": frame.line_accuracy_defined,
        }
        for frame in frames
    ]
    return json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def detection_to_dict(record: DetectionRecord) -> dict:
    """JSON-friendly form of a detection record (one line of a detections file)."""
    return {
        "response_id": record.response_id,
        "target": record.target.value,
        "line_judgments": [
            {
                "line_index": j.line_index,
                "status": j.status.value,
                "predicted": j.predicted.value,
                "confidence": j.confidence,
            }
            for j in record.line_judgments
        ],
        "word_flags": [
            {
                "line_index": f.line_index,
                "start": f.span.start,
                "end": f.span.end,
                "token": f.token,
                "reason": f.reason.value,
            }
            for f in record.word_flags
        ],
        "has_line_error": record.has_line_error,
        "has_word_error": record.has_word_error,
        "skipped_only": record.skipped_only,
        "tags": dict(sorted(record.tags.items())),
    }


def detection_from_dict(doc: dict) -> DetectionRecord:
    from langconfusion.detectors import FlagReason, LineJudgment, WordFlag
    from langconfusion.langcore import LanguageCode, TokenSpan

    return DetectionRecord(
        response_id=doc["response_id"],
        target=LanguageCode.parse(doc["target"]),
        line_judgments=[
            LineJudgment(
                line_index=j["line_index"],
                status=LineStatus(j["status"]),
                predicted=LanguageCode.parse(j["predicted"]),
                confidence=j["confidence"],
            )
            for j in doc["line_judgments"]
        ],
        word_flags=[
            WordFlag(
                line_index=f["line_index"],
                span=TokenSpan(f["start"], f["end"], f["token"]),
                token=f["token"],
                reason=FlagReason(f["reason"]),
            )
            for f in doc["word_flags"]
        ],
        has_line_error=doc["has_line_error"],
        has_word_error=doc["has_word_error"],
        skipped_only=doc["skipped_only"],
        tags=doc.get("tags", {}),
    )


def load_detections(path) -> list[DetectionRecord]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            if not raw.strip():
                continue
            try:
                records.append(detection_from_dict(json.loads(raw)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad detection record: {exc}") from exc
    return records


def save_detections(records: Iterable[DetectionRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(detection_to_dict(record), ensure_ascii=False, sort_keys=True))
            handle.write("\n")
