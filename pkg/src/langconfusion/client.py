"""Collect responses (and token logprobs) from OpenAI-compatible endpoints.

Generations are cached content-addressed under a run directory, keyed by
model, prompt text, and the full sampling configuration, so a completed run
can be replayed into the detectors without any network access.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from langconfusion.corpus import PromptRecord, ResponseRecord
from langconfusion.decoding import SamplingConfig, StepRecord, StepTrace


class ClientError(Exception):
    pass


class AuthError(ClientError):
    """401/403: not retryable."""


class RateLimitedError(ClientError):
    """429 persisted past the retry budget."""


class TransportError(ClientError):
    pass


class ResponseSchemaError(ClientError):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: str | None = None
    timeout: float = 60.0
    max_retries: int = 3
    parallelism: int = 4
    top_logprobs: int | None = None
    #: Base of the exponential backoff, in seconds. Zero disables sleeping.
    backoff_base: float = 0.5

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


@dataclass
class GenerationResult:
    record: ResponseRecord
    trace: StepTrace | None
    cache_hit: bool
    retries: int


def cache_key(model: str, prompt_text: str, sampling: SamplingConfig) -> str:
    """Stable digest over everything that determines a generation."""
    doc = {"model": model, "prompt": prompt_text, "sampling": sampling.as_dict()}
    return hashlib.sha256(
        json.dumps(doc, ensure_ascii=False, sort_keys=True).encode("utf-8")
    ).hexdigest()


class GenerationCache:
    """Content-addressed file cache: {run_dir}/cache/{key[:2]}/{key}.json."""

    def __init__(self, run_dir: str | Path):
        self.root = Path(run_dir) / "cache"

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, key: str, value: dict) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(value, ensure_ascii=False, sort_keys=True), encoding="utf-8")
        tmp.replace(path)


def _build_request_body(
    cfg: EndpointConfig,
    prompt: PromptRecord,
    sampling: SamplingConfig,
    fewshot: list[tuple[str, str]] | None,
) -> dict:
    messages = [{"role": role, "content": text} for role, text in (fewshot or [])]
    messages.append({"role": "user", "content": prompt.text})
    body = {
        "model": cfg.model,
        "messages": messages,
        "temperature": sampling.temperature,
        "top_p": sampling.top_p,
        "max_tokens": sampling.max_tokens,
        "seed": sampling.seed,
    }
    if cfg.top_logprobs is not None:
        body["logprobs"] = True
        body["top_logprobs"] = cfg.top_logprobs
    return body


def _parse_trace(choice: dict) -> StepTrace | None:
    content = (choice.get("logprobs") or {}).get("content")
    if not content:
        return None
    steps = []
    try:
        for entry in content:
            token = entry["token"]
            candidates = [
                (alt["token"], math.exp(alt["logprob"])) for alt in entry.get("top_logprobs", [])
            ]
            sampled = next((i for i, (t, _) in enumerate(candidates) if t == token), None)
            if sampled is None:
                candidates.append((token, math.exp(entry["logprob"])))
                sampled = len(candidates) - 1
            steps.append(StepRecord(candidates=tuple(candidates), sampled=sampled))
    except (KeyError, TypeError, ValueError) as exc:
        raise ResponseSchemaError(f"malformed logprobs payload: {exc}") from exc
    return StepTrace(steps=steps, truncated=True)


def _post_once(cfg: EndpointConfig, body: dict) -> dict:
    url = cfg.base_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    if cfg.api_key_env:
        token = os.environ.get(cfg.api_key_env)
        if not token:
            raise AuthError(f"environment variable {cfg.api_key_env} is not set")
        headers["Authorization"] = f"Bearer {token}"
    request = urllib.request.Request(
        url, data=json.dumps(body).encode("utf-8"), headers=headers, method="POST"
    )
    try:
        with urllib.request.urlopen(request, timeout=cfg.timeout) as response:
            return json.loads(response.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        if exc.code in (401, 403):
            raise AuthError(f"HTTP {exc.code} from {url}") from exc
        raise _Retryable(exc.code, f"HTTP {exc.code} from {url}") from exc
    except urllib.error.URLError as exc:
        raise _Retryable(None, f"transport error: {exc.reason}") from exc
    except json.JSONDecodeError as exc:
        raise ResponseSchemaError(f"non-JSON response from {url}") from exc


class _Retryable(Exception):
    def __init__(self, status: int | None, message: str):
        super().__init__(message)
        self.status = status


def generate_remote(
    cfg: EndpointConfig,
    prompt: PromptRecord,
    sampling: SamplingConfig,
    fewshot: list[tuple[str, str]] | None = None,
    cache: GenerationCache | None = None,
) -> GenerationResult:
    """One logical generation, cache-first, with exponential-backoff retries.

    429 and 5xx responses and transport failures retry up to
    ``cfg.max_retries`` times; 401/403 fail immediately.
    """
    key = cache_key(cfg.model, prompt.text, sampling)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return GenerationResult(
                record=_record_from_cache(hit, prompt, cfg, sampling),
                trace=_trace_from_cache(hit),
                cache_hit=True,
                retries=0,
            )

    body = _build_request_body(cfg, prompt, sampling, fewshot)
    retries = 0
    while True:
        try:
            payload = _post_once(cfg, body)
            break
        except _Retryable as exc:
            if retries >= cfg.max_retries:
                if exc.status == 429:
                    raise RateLimitedError(str(exc)) from exc
                raise TransportError(str(exc)) from exc
            if cfg.backoff_base > 0:
                time.sleep(cfg.backoff_base * (2**retries))
            retries += 1

    try:
        choice = payload["choices"][0]
        text = choice["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ResponseSchemaError(f"unexpected payload shape: {exc}") from exc
    trace = _parse_trace(choice)

    record = ResponseRecord(
        prompt_id=prompt.id, model=cfg.model, text=text, sampling=sampling.as_dict()
    )
    if cache is not None:
        cache.put(
            key,
            {
                "key": key,
                "created_at": datetime.now(timezone.utc).isoformat(),
                "prompt_id": prompt.id,
                "model": cfg.model,
                "text": text,
                "sampling": sampling.as_dict(),
                "trace": _trace_to_cache(trace),
            },
        )
    return GenerationResult(record=record, trace=trace, cache_hit=False, retries=retries)


def _record_from_cache(
    hit: dict, prompt: PromptRecord, cfg: EndpointConfig, sampling: SamplingConfig
) -> ResponseRecord:
    return ResponseRecord(
        prompt_id=prompt.id,
        model=hit.get("model", cfg.model),
        text=hit["text"],
        sampling=hit.get("sampling", sampling.as_dict()),
    )


def _trace_to_cache(trace: StepTrace | None) -> list | None:
    if trace is None:
        return None
    return [
        {"candidates": [[t, p] for t, p in step.candidates], "sampled": step.sampled}
        for step in trace.steps
    ]


def _trace_from_cache(hit: dict) -> StepTrace | None:
    steps = hit.get("trace")
    if steps is None:
        return None
    return StepTrace(
        steps=[
            StepRecord(candidates=tuple((t, p) for t, p in s["candidates"]), sampled=s["sampled"])
            for s in steps
        ],
        truncated=True,
    )


def batch_generate(
    cfg: EndpointConfig,
    prompts: list[PromptRecord],
    sampling: SamplingConfig,
    run_dir: str | Path,
    fewshot: list[tuple[str, str]] | None = None,
) -> tuple[list[GenerationResult | None], list[dict]]:
    """Generate for many prompts with at most ``cfg.parallelism`` in flight.

    Output order matches input order regardless of completion order. A
    failing prompt is recorded in the manifest and yields None in the result
    list; it does not abort the batch.
    """
    if not prompts:
        raise ValueError("no prompts to generate")
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    cache = GenerationCache(run_dir)

    results: list[GenerationResult | None] = [None] * len(prompts)
    manifest: list[dict] = [{} for _ in prompts]

    def work(index: int) -> None:
        prompt = prompts[index]
        try:
            result = generate_remote(cfg, prompt, sampling, fewshot=fewshot, cache=cache)
            results[index] = result
            manifest[index] = {
                "prompt_id": prompt.id,
                "status": "cached" if result.cache_hit else "ok",
                "retries": result.retries,
                "error": None,
            }
        except ClientError as exc:
            manifest[index] = {
                "prompt_id": prompt.id,
                "status": "failed",
                "retries": cfg.max_retries,
                "error": f"{type(exc).__name__}: {exc}",
            }

    with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
        list(pool.map(work, range(len(prompts))))

    with open(run_dir / "manifest.jsonl", "a", encoding="utf-8") as handle:
        for row in manifest:
            handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True))
            handle.write("\n")
    return results, manifest
