"""OpenAI-compatible chat-completions backends.

One shared client handles auth, timeouts, bounded parallelism, and retry
with exponential backoff (1s/2s/4s on transport errors and HTTP 5xx/429).
The NLI capability is expressed as a yes/no classification prompt since
generic endpoints expose no dedicated entailment route.
"""

from __future__ import annotations

import base64
import os
import re
import threading
import time

import requests

from ..errors import AuthFailure, BackendError, MalformedResponse
from ..errors import Timeout as TimeoutError_
from .base import (
    BackendConfig,
    EntailmentVerdict,
    GenerationRequest,
    GenerationResult,
)

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}

NLI_PROMPT = (
    "You are a strict natural language inference judge. Decide whether the "
    "premise entails the hypothesis, i.e. whether a reader of the premise "
    "would agree the hypothesis must be true.\n"
    "Premise: <<<{premise}>>>\n"
    "Hypothesis: <<<{hypothesis}>>>\n"
    "Answer with exactly one word: yes or no."
)

# Used by the mock server to recognize NLI classification prompts.
NLI_PROMPT_RE = re.compile(
    r"Premise: <<<(?P<premise>.*?)>>>\nHypothesis: <<<(?P<hypothesis>.*?)>>>",
    re.DOTALL,
)


class OpenAiChatClient:
    """Thread-safe chat-completions client with a hard in-flight cap."""

    def __init__(self, cfg: BackendConfig, sleeper=time.sleep):
        self.cfg = cfg
        self._sem = threading.BoundedSemaphore(cfg.parallelism)
        self._session = requests.Session()
        self._sleeper = sleeper

    def _auth_header(self) -> dict:
        if not self.cfg.auth_env:
            return {}
        key = os.environ.get(self.cfg.auth_env)
        if key is None:
            raise AuthFailure(f"environment variable {self.cfg.auth_env} is not set")
        return {"Authorization": f"Bearer {key}"}

    def check_reachable(self) -> None:
        """Raise BackendError if the endpoint host is not answering at all."""
        try:
            self._session.get(self.cfg.endpoint, timeout=min(self.cfg.timeout, 5.0))
        except requests.RequestException as exc:
            raise BackendError(f"endpoint {self.cfg.endpoint} unreachable: {exc}") from exc

    def chat(self, payload: dict) -> dict:
        payload = {"model": self.cfg.model, **payload}
        headers = {"Content-Type": "application/json", **self._auth_header()}
        attempts = self.cfg.max_retries + 1
        last_error: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                self._sleeper(2 ** (attempt - 1))
            try:
                with self._sem:
                    resp = self._post(payload, headers)
            except requests.Timeout as exc:
                last_error = TimeoutError_(f"request to {self.cfg.endpoint} timed out")
                continue
            except requests.RequestException as exc:
                last_error = BackendError(f"transport error: {exc}")
                continue
            if resp.status_code in (401, 403):
                raise AuthFailure(f"endpoint rejected credentials (HTTP {resp.status_code})")
            if resp.status_code in _RETRYABLE_STATUS:
                last_error = BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                continue
            if resp.status_code != 200:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise MalformedResponse(f"endpoint returned non-JSON body: {exc}") from exc
        raise last_error  # retries exhausted

    def _post(self, payload: dict, headers: dict):
        return self._session.post(
            self.cfg.endpoint, json=payload, headers=headers, timeout=self.cfg.timeout
        )


def _message_content(req: GenerationRequest) -> list | str:
    if req.image_png is None:
        return req.prompt
    encoded = base64.b64encode(req.image_png).decode("ascii")
    return [
        {"type": "text", "text": req.prompt},
        {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{encoded}"}},
    ]


def _extract_text(body: dict) -> str:
    try:
        return body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"missing choices[0].message.content: {exc}") from exc


class HttpVlmBackend:
    def __init__(self, client: OpenAiChatClient):
        self._client = client

    def generate(self, req: GenerationRequest) -> GenerationResult:
        payload = {
            "messages": [{"role": "user", "content": _message_content(req)}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "logprobs": True,
            "top_logprobs": req.top_logprobs,
        }
        if req.seed is not None:
            payload["seed"] = req.seed
        body = self._client.chat(payload)
        text = _extract_text(body)
        try:
            content = body["choices"][0]["logprobs"]["content"]
            logprobs = [tok["logprob"] for tok in content]
            tops = [
                sorted((alt["logprob"] for alt in tok.get("top_logprobs", [])), reverse=True)
                or [tok["logprob"]]
                for tok in content
            ]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"endpoint returned no logprobs: {exc}") from exc
        return GenerationResult.from_lists(text, logprobs, tops)


class HttpNliBackend:
    def __init__(self, client: OpenAiChatClient):
        self._client = client

    def _entails(self, premise: str, hypothesis: str) -> bool:
        prompt = NLI_PROMPT.format(premise=premise, hypothesis=hypothesis)
        body = self._client.chat(
            {
                "messages": [{"role": "user", "content": prompt}],
                "temperature": 0.0,
                "max_tokens": 4,
            }
        )
        answer = _extract_text(body).strip().lower()
        return answer.startswith("yes")

    def check_entailment(self, premise: str, hypothesis: str) -> EntailmentVerdict:
        return EntailmentVerdict(
            forward=self._entails(premise, hypothesis),
            backward=self._entails(hypothesis, premise),
        )


class HttpLlmBackend:
    def __init__(self, client: OpenAiChatClient, max_tokens: int = 2048):
        self._client = client
        self._max_tokens = max_tokens

    def complete_text(self, prompt: str) -> str:
        body = self._client.chat(
            {
                "messages": [{"role": "user", "content": prompt}],
                "temperature": 0.0,
                "max_tokens": self._max_tokens,
            }
        )
        return _extract_text(body)
