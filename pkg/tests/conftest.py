"""Shared test helpers: a scripted local HTTP endpoint and corpus builders."""

from __future__ import annotations

import json
import random
import string
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from portalgen.corpus import Corpus, Message


def completion_payload(text: str, finish_reason: str = "stop") -> dict:
    return {"choices": [{"text": text, "finish_reason": finish_reason}]}


class ScriptedEndpoint:
    """Local HTTP stub that replays a script of (status, payload) responses.

    Records every request body and tracks the peak number of concurrent
    requests. When the script runs out, the last entry repeats.
    """

    def __init__(self, script: list[tuple[int, dict | None]], delay: float = 0.0):
        self.script = list(script)
        self.delay = delay
        self.requests: list[dict] = []
        self.request_headers: list[dict] = []
        self.in_flight = 0
        self.peak_in_flight = 0
        self._lock = threading.Lock()

        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                with stub._lock:
                    stub.in_flight += 1
                    stub.peak_in_flight = max(stub.peak_in_flight, stub.in_flight)
                    length = int(self.headers.get("Content-Length", 0))
                    body = json.loads(self.rfile.read(length)) if length else {}
                    stub.requests.append(body)
                    stub.request_headers.append(dict(self.headers))
                    index = min(len(stub.requests) - 1, len(stub.script) - 1)
                    status, payload = stub.script[index]
                if stub.delay:
                    time.sleep(stub.delay)
                data = json.dumps(payload or {}).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)
                with stub._lock:
                    stub.in_flight -= 1

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1/completions"

    def __enter__(self) -> "ScriptedEndpoint":
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def api_key_env(monkeypatch):
    monkeypatch.setenv("PORTALGEN_TEST_KEY", "test-key-123")
    return "PORTALGEN_TEST_KEY"


WORDS = (
    "pain swelling doctor refill appointment medication dizzy fever cough rash "
    "morning night week pharmacy dose symptoms better worse schedule labs nurse "
    "pressure sugar sleep stomach knee back shoulder ankle chest"
).split()


def random_text(rng: random.Random, min_words: int = 3, max_words: int = 40) -> str:
    words = [rng.choice(WORDS) for _ in range(rng.randint(min_words, max_words))]
    if rng.random() < 0.3:
        words.append("café")  # exercise non-ASCII round-trips
    if rng.random() < 0.5:
        words[-1] += rng.choice(".!?,")
    return " ".join(words)


def make_corpus(seed: int, size: int = 20, name: str = "fixture") -> Corpus:
    rng = random.Random(seed)
    messages = [
        Message(
            id=f"m{i:03d}",
            text=random_text(rng),
            source_tag=rng.choice(("reference", "portalgen", "zeroshot")),
        )
        for i in range(size)
    ]
    return Corpus(name=name, messages=messages)


def random_id(rng: random.Random, length: int = 8) -> str:
    return "".join(rng.choice(string.ascii_lowercase + string.digits) for _ in range(length))
