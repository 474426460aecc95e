"""Serve a mock script file as a local OpenAI-compatible endpoint.

Used by `univrse mock-serve` and by integration tests that exercise the real
HTTP client path without any external service. Routing is by prompt shape:
NLI classification prompts answer from the entailment section, rendered
structured-template prompts from the structured section, and everything else
from the generation section (keyed by image digest, prompt, and seed).
"""

from __future__ import annotations

import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..errors import ScriptMiss
from .base import GenerationRequest, GenerationResult
from .http import NLI_PROMPT_RE
from .mock import ScriptedLlmBackend, ScriptedNliBackend, ScriptedVlmBackend

_DATA_URL_PREFIX = "data:image/png;base64,"


def _prompt_and_image(messages: list) -> tuple[str, bytes | None]:
    content = messages[-1]["content"]
    if isinstance(content, str):
        return content, None
    prompt, image = "", None
    for part in content:
        if part.get("type") == "text":
            prompt = part["text"]
        elif part.get("type") == "image_url":
            url = part["image_url"]["url"]
            if url.startswith(_DATA_URL_PREFIX):
                image = base64.b64decode(url[len(_DATA_URL_PREFIX):])
    return prompt, image


def _chat_body(text: str, result: GenerationResult | None = None) -> dict:
    message: dict = {"index": 0, "message": {"role": "assistant", "content": text},
                     "finish_reason": "stop"}
    if result is not None:
        message["logprobs"] = {
            "content": [
                {
                    "token": f"t{i}",
                    "logprob": chosen,
                    "top_logprobs": [
                        {"token": f"t{i}a{j}", "logprob": lp} for j, lp in enumerate(top)
                    ],
                }
                for i, (chosen, top) in enumerate(result.token_logprobs)
            ]
        }
    return {"id": "mock", "object": "chat.completion", "choices": [message]}


class MockServer:
    """Threaded in-process HTTP server over one script file."""

    def __init__(self, script: dict, host: str = "127.0.0.1", port: int = 0):
        self._vlm = ScriptedVlmBackend(script)
        self._nli = ScriptedNliBackend(script)
        self._llm = ScriptedLlmBackend(script)
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output quiet
                pass

            def do_GET(self):
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.end_headers()
                self.wfile.write(b'{"status": "ok"}')

            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                try:
                    payload = json.loads(self.rfile.read(length))
                    body = outer._dispatch(payload)
                    code = 200
                except ScriptMiss as exc:
                    body = {"error": {"message": str(exc), "type": "script_miss"}}
                    code = 404
                except Exception as exc:  # malformed request
                    body = {"error": {"message": str(exc), "type": "bad_request"}}
                    code = 400
                data = json.dumps(body).encode("utf-8")
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    def _dispatch(self, payload: dict) -> dict:
        prompt, image = _prompt_and_image(payload["messages"])

        match = NLI_PROMPT_RE.search(prompt)
        if match:
            verdict = self._nli.check_entailment(match["premise"], match["hypothesis"])
            return _chat_body("yes" if verdict.forward else "no")

        try:
            return _chat_body(self._llm.complete_text(prompt))
        except ScriptMiss:
            pass

        req = GenerationRequest(
            prompt=prompt,
            image_png=image,
            temperature=payload.get("temperature") or 1.0,
            max_tokens=payload.get("max_tokens", 256),
            top_logprobs=payload.get("top_logprobs", 20) or 20,
            seed=payload.get("seed"),
        )
        result = self._vlm.generate(req)
        return _chat_body(result.text, result)

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def start(self) -> "MockServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def serve_forever(self) -> None:
        self._httpd.serve_forever()
