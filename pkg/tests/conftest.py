from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from langconfusion import resources
from langconfusion.langcore import LanguageCode
from langconfusion.lid import LidConfig, train


def split_mini_corpus():
    """Deterministic train/held-out split: every fourth sentence per language."""
    by_lang: dict[LanguageCode, list[str]] = {}
    for lang, text in resources.mini_corpus():
        by_lang.setdefault(lang, []).append(text)
    train_set, heldout = [], []
    for lang, texts in by_lang.items():
        for i, text in enumerate(texts):
            (heldout if i % 4 == 3 else train_set).append((lang, text))
    return train_set, heldout


@pytest.fixture(scope="session")
def mini_model():
    """LID model trained on the full bundled corpus."""
    return train(resources.mini_corpus(), LidConfig())


@pytest.fixture(scope="session")
def heldout_model():
    """LID model trained on the corpus minus the held-out quarter."""
    train_set, _ = split_mini_corpus()
    return train(train_set, LidConfig())


@pytest.fixture(scope="session")
def heldout_samples():
    return split_mini_corpus()[1]


@pytest.fixture(scope="session")
def dictionary():
    return resources.default_dictionary()


@pytest.fixture(scope="session")
def fox_lm():
    from langconfusion.decoding import load_toylm

    return load_toylm(resources.quick_brown_fox_lm_path())


class MockState:
    """Shared counters for the OpenAI-compatible echo server."""

    def __init__(self):
        self.lock = threading.Lock()
        self.requests = 0
        self.in_flight = 0
        self.max_in_flight = 0
        self.fail_statuses: list[int] = []
        self.latency_by_index: dict[int, float] = {}
        self.latency_counter = 0
        self.logprobs_payload = None


class MockHandler(BaseHTTPRequestHandler):
    """Echoes the last user message back as 'echo: <text>'."""

    state: MockState

    def log_message(self, *args):
        pass

    def do_POST(self):
        state = self.state
        with state.lock:
            state.requests += 1
            state.in_flight += 1
            state.max_in_flight = max(state.max_in_flight, state.in_flight)
            index = state.latency_counter
            state.latency_counter += 1
            status = state.fail_statuses.pop(0) if state.fail_statuses else 200
        try:
            delay = state.latency_by_index.get(index, 0.0)
            if delay:
                time.sleep(delay)
            length = int(self.headers["Content-Length"])
            body = json.loads(self.rfile.read(length).decode("utf-8"))
            if status != 200:
                self.send_response(status)
                self.end_headers()
                return
            prompt_text = body["messages"][-1]["content"]
            choice = {"message": {"role": "assistant", "content": f"echo: {prompt_text}"}}
            if state.logprobs_payload is not None:
                choice["logprobs"] = state.logprobs_payload
            payload = json.dumps({"choices": [choice]}).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)
        finally:
            with state.lock:
                state.in_flight -= 1


@pytest.fixture()
def mock_endpoint():
    state = MockState()
    handler = type("Handler", (MockHandler,), {"state": state})
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}", state
    server.shutdown()
    thread.join(timeout=5)
