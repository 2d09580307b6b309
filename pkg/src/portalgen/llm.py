"""Completion clients: a live OpenAI-compatible HTTP endpoint and an offline mock.

The HTTP client speaks the text-completions wire shape (``prompt``,
``temperature``, ``max_tokens``, optional ``stop``) and retries 429/5xx
responses with exponential backoff. The mock produces deterministic
patient-message-shaped text from bundled fragments and never touches the
network.
"""

from __future__ import annotations

import hashlib
import os
import random
import threading
import time
from dataclasses import dataclass, field

import requests

from .corpus import DEFAULT_SENTINEL

FINISH_STOP = "stop"
FINISH_LENGTH = "length"
FINISH_ERROR = "error"


class LlmError(RuntimeError):
    """Completion request failed (exhausted retries, bad response, or client error)."""


class LlmAuthError(LlmError):
    """The endpoint rejected our credentials; retrying will not help."""


@dataclass(frozen=True)
class Completion:
    text: str
    finish_reason: str = FINISH_STOP

    def __post_init__(self):
        if self.finish_reason not in (FINISH_STOP, FINISH_LENGTH, FINISH_ERROR):
            raise ValueError(f"bad finish_reason: {self.finish_reason!r}")
        if not self.text and self.finish_reason != FINISH_ERROR:
            raise ValueError("empty completion text without an error finish reason")


@dataclass
class ProviderConfig:
    endpoint_url: str
    model: str
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.75
    max_new_tokens: int = 256
    timeout_seconds: int = 60
    max_retries: int = 3
    max_parallel: int = 4
    backoff_seconds: float = 0.5
    _limiter: threading.BoundedSemaphore = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        self._limiter = threading.BoundedSemaphore(self.max_parallel)


def _api_key(config: ProviderConfig) -> str:
    key = os.environ.get(config.api_key_env)
    if not key:
        raise LlmAuthError(f"environment variable {config.api_key_env} is not set")
    return key


def complete(config: ProviderConfig, prompt: str, stop: str | None = None) -> Completion:
    """POST the prompt to the endpoint; retry 429/5xx with exponential backoff.

    Thread-safe: at most ``config.max_parallel`` requests are in flight per config.
    """
    headers = {"Authorization": f"Bearer {_api_key(config)}"}
    body: dict = {
        "model": config.model,
        "prompt": prompt,
        "temperature": config.temperature,
        "max_tokens": config.max_new_tokens,
    }
    if stop is not None:
        body["stop"] = [stop]

    last_failure = ""
    for attempt in range(config.max_retries + 1):
        if attempt > 0:
            time.sleep(config.backoff_seconds * 2 ** (attempt - 1))
        try:
            with config._limiter:
                resp = requests.post(
                    config.endpoint_url, json=body, headers=headers, timeout=config.timeout_seconds
                )
        except requests.RequestException as exc:
            last_failure = f"request failed: {exc}"
            continue
        if resp.status_code in (401, 403):
            raise LlmAuthError(f"authentication failed (HTTP {resp.status_code})")
        if resp.status_code == 429 or 500 <= resp.status_code < 600:
            last_failure = f"HTTP {resp.status_code}"
            continue
        if resp.status_code != 200:
            raise LlmError(f"endpoint returned HTTP {resp.status_code}: {resp.text[:200]}")
        return _parse_completion(resp)
    raise LlmError(
        f"exhausted retries after {config.max_retries + 1} attempts (last failure: {last_failure})"
    )


def _parse_completion(resp: requests.Response) -> Completion:
    try:
        payload = resp.json()
        choice = payload["choices"][0]
        text = choice["text"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise LlmError(f"malformed response body: {exc}") from exc
    if not isinstance(text, str):
        raise LlmError("malformed response body: choice text is not a string")
    reason = FINISH_LENGTH if choice.get("finish_reason") == "length" else FINISH_STOP
    if not text:
        return Completion(text="", finish_reason=FINISH_ERROR)
    return Completion(text=text, finish_reason=reason)


# Fragments for the offline mock, in the register of real portal messages:
# informal, assumes a long-standing clinician relationship, light on context.
MOCK_GREETINGS = (
    "Hi Dr,",
    "Hey Dr. James,",
    "Hi Dr. Patel,",
    "Hello,",
    "Hi,",
    "Good morning Dr,",
    "Hey,",
    "Hi Dr. Lee,",
)

MOCK_BODY_SENTENCES = (
    "The pain is back again and the medication you gave me is NOT working.",
    "I am really scared and not sure what to do next.",
    "I just woke up on the ground and have no idea how I got there.",
    "I am very nauseous and don't know if I should wait this out.",
    "My blood sugar has been very difficult to control this week.",
    "Do I need to go to a hospital or can this wait until my appointment?",
    "I've been feeling dizzy on and off since Tuesday.",
    "The swelling in my knee hasn't gone down like you said it might.",
    "I ran out of the refills you called in last month.",
    "Should I keep taking the full dose or cut back like we discussed?",
    "My husband thinks I should come in but I wanted to check with you first.",
    "The new pills are making me feel foggy in the mornings.",
    "I tried the stretches you showed me but my back is still acting up.",
    "My cough has gotten worse at night and I'm not sleeping.",
    "The rash is spreading a little past where it was at my last visit.",
    "I checked my pressure at the pharmacy and it was higher than usual.",
    "Is there something else I can try that you can call in?",
    "I don't want to overreact, but I also don't want to ignore it.",
    "It feels a lot like what happened two winters ago.",
    "I've been keeping the log like you asked and the numbers are all over.",
    "The incision looks a bit red around the edges today.",
    "I missed two doses while we were away, should I double up?",
    "My stomach has been upset ever since we switched brands.",
    "I can barely put weight on it when I get out of bed.",
    "The headaches are back, maybe three or four times a week now.",
    "I'm due for labs soon, can we move them up?",
    "My daughter noticed I've been more short of breath on the stairs.",
    "Things were fine until about Thursday, then it flared up again.",
)

MOCK_CLOSINGS = (
    "Thanks,",
    "Best,",
    "Thank you so much,",
    "Thanks again,",
    "Appreciate it,",
    "Talk soon,",
)

MOCK_SIGNATURES = ("Dana", "Victoria", "Sam", "Alex", "Chris", "Pat", "Jordan", "Morgan", "Taylor")


def mock_complete(prompt: str, seed: int) -> Completion:
    """Deterministic offline completion: fragments picked by a hash of (prompt, seed).

    The text always ends with exactly one sentinel occurrence and involves no
    network I/O.
    """
    digest = hashlib.blake2b(f"{seed}:{prompt}".encode("utf-8"), digest_size=8).digest()
    rng = random.Random(int.from_bytes(digest, "big"))
    greeting = rng.choice(MOCK_GREETINGS)
    body = rng.sample(MOCK_BODY_SENTENCES, k=rng.randint(2, 5))
    closing = rng.choice(MOCK_CLOSINGS)
    signature = rng.choice(MOCK_SIGNATURES)
    text = f"{greeting}\n{' '.join(body)}\n\n{closing}\n{signature}\n{DEFAULT_SENTINEL}"
    return Completion(text=text, finish_reason=FINISH_STOP)


class MockClient:
    """Offline stand-in for an LLM endpoint; pure function of (prompt, seed)."""

    def __init__(self, seed: int, max_parallel: int = 4):
        self.seed = seed
        self.max_parallel = max_parallel

    def complete(self, prompt: str, stop: str | None = None) -> Completion:
        return mock_complete(prompt, self.seed)


class HttpClient:
    """Live endpoint client; thin wrapper tying a ProviderConfig to complete()."""

    def __init__(self, config: ProviderConfig):
        self.config = config

    @property
    def max_parallel(self) -> int:
        return self.config.max_parallel

    def complete(self, prompt: str, stop: str | None = None) -> Completion:
        return complete(self.config, prompt, stop=stop)


@dataclass(frozen=True)
class BatchFailure:
    """One failed item in a batch generation run."""

    item_id: str
    error: str
