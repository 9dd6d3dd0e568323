from __future__ import annotations

import random

import pytest

from langconfusion.client import (
    AuthError,
    EndpointConfig,
    GenerationCache,
    RateLimitedError,
    TransportError,
    batch_generate,
    cache_key,
    generate_remote,
)
from langconfusion.corpus import PromptRecord
from langconfusion.decoding import SamplingConfig
from langconfusion.langcore import LanguageCode


def make_prompt(pid="p1", text="Explain how the tide works."):
    return PromptRecord(
        id=pid,
        dataset="custom",
        setting="monolingual",
        text=text,
        target=LanguageCode.EN,
        instruction_language=LanguageCode.EN,
    )


def make_config(base_url, **overrides) -> EndpointConfig:
    defaults = dict(
        base_url=base_url,
        model="mock-model",
        timeout=10.0,
        max_retries=3,
        parallelism=4,
        backoff_base=0.0,
    )
    defaults.update(overrides)
    return EndpointConfig(**defaults)


class TestGenerateRemote:
    def test_echo(self, mock_endpoint):
        url, state = mock_endpoint
        result = generate_remote(make_config(url), make_prompt(), SamplingConfig())
        assert result.record.text == "echo: Explain how the tide works."
        assert result.record.model == "mock-model"
        assert not result.cache_hit
        assert result.retries == 0

    def test_cache_hit_no_network(self, mock_endpoint, tmp_path):
        url, state = mock_endpoint
        cache = GenerationCache(tmp_path)
        cfg = make_config(url)
        first = generate_remote(cfg, make_prompt(), SamplingConfig(), cache=cache)
        assert state.requests == 1
        second = generate_remote(cfg, make_prompt(), SamplingConfig(), cache=cache)
        assert state.requests == 1
        assert second.cache_hit
        assert second.record.text == first.record.text

    def test_retry_on_429(self, mock_endpoint):
        url, state = mock_endpoint
        state.fail_statuses = [429]
        result = generate_remote(make_config(url), make_prompt(), SamplingConfig())
        assert result.retries == 1
        assert result.record.text.startswith("echo:")

    def test_rate_limited_after_budget(self, mock_endpoint):
        url, state = mock_endpoint
        state.fail_statuses = [429, 429, 429]
        with pytest.raises(RateLimitedError):
            generate_remote(make_config(url, max_retries=2), make_prompt(), SamplingConfig())

    def test_5xx_retries_then_fails(self, mock_endpoint):
        url, state = mock_endpoint
        state.fail_statuses = [500, 503]
        with pytest.raises(TransportError):
            generate_remote(make_config(url, max_retries=1), make_prompt(), SamplingConfig())

    def test_auth_error_not_retried(self, mock_endpoint):
        url, state = mock_endpoint
        state.fail_statuses = [401]
        with pytest.raises(AuthError):
            generate_remote(make_config(url), make_prompt(), SamplingConfig())
        assert state.requests == 1

    def test_missing_token_env(self, mock_endpoint, monkeypatch):
        url, _ = mock_endpoint
        monkeypatch.delenv("LC_TEST_TOKEN", raising=False)
        cfg = make_config(url, api_key_env="LC_TEST_TOKEN")
        with pytest.raises(AuthError):
            generate_remote(cfg, make_prompt(), SamplingConfig())

    def test_logprobs_trace(self, mock_endpoint):
        url, state = mock_endpoint
        state.logprobs_payload = {
            "content": [
                {
                    "token": "echo",
                    "logprob": -0.1,
                    "top_logprobs": [
                        {"token": "echo", "logprob": -0.1},
                        {"token": "other", "logprob": -3.0},
                    ],
                }
            ]
        }
        cfg = make_config(url, top_logprobs=2)
        result = generate_remote(cfg, make_prompt(), SamplingConfig())
        assert result.trace is not None
        assert result.trace.truncated
        assert result.trace.steps[0].sampled_token == "echo"
        assert len(result.trace.steps[0].candidates) == 2


class TestCacheKey:
    def test_sensitivity(self):
        base = SamplingConfig(temperature=0.3, top_p=0.75, seed=0, max_tokens=100)
        key = cache_key("m", "text", base)
        assert key != cache_key("m", "text", SamplingConfig(temperature=0.4, top_p=0.75, seed=0, max_tokens=100))
        assert key != cache_key("m", "text", SamplingConfig(temperature=0.3, top_p=0.9, seed=0, max_tokens=100))
        assert key != cache_key("m", "text", SamplingConfig(temperature=0.3, top_p=0.75, seed=1, max_tokens=100))
        assert key != cache_key("m", "text", SamplingConfig(temperature=0.3, top_p=0.75, seed=0, max_tokens=50))
        assert key != cache_key("m2", "text", base)
        assert key != cache_key("m", "text2", base)
        assert key == cache_key("m", "text", SamplingConfig(temperature=0.3, top_p=0.75, seed=0, max_tokens=100))


class TestBatchGenerate:
    def test_order_preserved_under_random_latency(self, mock_endpoint, tmp_path):
        url, state = mock_endpoint
        rng = random.Random(3)
        prompts = [make_prompt(f"p{i}", f"question number {i}") for i in range(10)]
        state.latency_by_index = {i: rng.uniform(0.0, 0.05) for i in range(10)}
        results, manifest = batch_generate(make_config(url), prompts, SamplingConfig(), tmp_path)
        for i, (prompt, result) in enumerate(zip(prompts, results)):
            assert result is not None
            assert result.record.prompt_id == prompt.id
            assert result.record.text == f"echo: question number {i}"
        assert [row["status"] for row in manifest] == ["ok"] * 10

    def test_concurrency_bound(self, mock_endpoint, tmp_path):
        url, state = mock_endpoint
        prompts = [make_prompt(f"p{i}", f"q {i}") for i in range(12)]
        state.latency_by_index = {i: 0.03 for i in range(12)}
        batch_generate(make_config(url, parallelism=3), prompts, SamplingConfig(), tmp_path)
        assert state.max_in_flight <= 3

    def test_all_cached_second_run(self, mock_endpoint, tmp_path):
        url, state = mock_endpoint
        prompts = [make_prompt(f"p{i}", f"q {i}") for i in range(5)]
        batch_generate(make_config(url), prompts, SamplingConfig(), tmp_path)
        first_requests = state.requests
        results, manifest = batch_generate(make_config(url), prompts, SamplingConfig(), tmp_path)
        assert state.requests == first_requests
        assert [row["status"] for row in manifest] == ["cached"] * 5
        assert all(r is not None for r in results)

    def test_partial_failure_does_not_abort(self, mock_endpoint, tmp_path):
        url, state = mock_endpoint
        state.fail_statuses = [401]
        prompts = [make_prompt(f"p{i}", f"q {i}") for i in range(4)]
        results, manifest = batch_generate(
            make_config(url, parallelism=1), prompts, SamplingConfig(), tmp_path
        )
        statuses = [row["status"] for row in manifest]
        assert statuses.count("failed") == 1
        assert statuses.count("ok") == 3
        assert sum(r is None for r in results) == 1
        manifest_file = (tmp_path / "manifest.jsonl").read_text(encoding="utf-8")
        assert len(manifest_file.strip().splitlines()) == 4

    def test_replay_reproduces_exact_inputs(self, mock_endpoint, tmp_path):
        url, state = mock_endpoint
        prompts = [make_prompt(f"p{i}", f"q {i}") for i in range(3)]
        first, _ = batch_generate(make_config(url), prompts, SamplingConfig(), tmp_path)
        replay, _ = batch_generate(make_config(url), prompts, SamplingConfig(), tmp_path)
        assert [r.record for r in first] == [r.record for r in replay]
