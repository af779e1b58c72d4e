"""OpenAI-compatible chat client with retries, plus a deterministic offline stub."""

from __future__ import annotations

import logging
import os
import re
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Protocol

log = logging.getLogger(__name__)

ENDPOINT_ENV = "GEOFORGE_CHAT_ENDPOINT"
DEFAULT_ENDPOINT = "http://localhost:8000/v1"

Message = dict[str, str]


class ChatError(RuntimeError):
    pass


class ChatClient(Protocol):
    def complete(self, messages: list[Message]) -> str: ...


@dataclass
class HttpChatClient:
    endpoint: str = DEFAULT_ENDPOINT
    model: str = "vicuna-13b-v1.5"
    temperature: float = 0.2
    timeout: float = 60.0
    attempts: int = 3
    backoff: float = 1.0
    api_key: str | None = None
    sleep: Callable[[float], None] = time.sleep

    @classmethod
    def from_env(cls, **kwargs) -> "HttpChatClient":
        env = os.environ.get(ENDPOINT_ENV, "").strip()
        if env:
            kwargs["endpoint"] = env
        kwargs.setdefault("api_key", os.environ.get("OPENAI_API_KEY") or None)
        return cls(**kwargs)

    def _post(self, messages: list[Message]) -> str:
        import httpx

        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        resp = httpx.post(
            self.endpoint.rstrip("/") + "/chat/completions",
            json={"model": self.model, "messages": messages, "temperature": self.temperature},
            headers=headers,
            timeout=self.timeout,
        )
        resp.raise_for_status()
        data = resp.json()
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ChatError(f"unexpected response shape: {str(data)[:200]}") from None

    def complete(self, messages: list[Message]) -> str:
        last: Exception | None = None
        for attempt in range(self.attempts):
            try:
                return self._post(messages)
            except Exception as exc:
                last = exc
                log.warning("chat attempt %d/%d failed: %s", attempt + 1, self.attempts, exc)
                if attempt + 1 < self.attempts:
                    self.sleep(self.backoff * (2 ** attempt))
        raise ChatError(f"chat service failed after {self.attempts} attempts: {last}")


_DESC_RE = re.compile(r"Description:\s*(.*)\Z", re.DOTALL)


def _split_sentences(text: str) -> list[str]:
    return [s.strip() for s in re.split(r"(?<=\.)\s+", text.strip()) if s.strip()]


class OfflineChatClient:
    """Returns canned dialogues built only from the description in the prompt."""

    def complete(self, messages: list[Message]) -> str:
        system = messages[0]["content"] if messages else ""
        m = _DESC_RE.search(messages[-1]["content"])
        desc = m.group(1).strip() if m else messages[-1]["content"].strip()
        sentences = _split_sentences(desc) or [desc]
        if "KIND: detailed" in system:
            return " ".join(sentences)
        if "KIND: complex" in system:
            return (
                "Question: What can be inferred about the arrangement of objects in this scene?\n"
                f"Answer: The scene shows the following. {' '.join(sentences)}"
            )
        rest = " ".join(sentences[1:]) or f"In summary, {sentences[0][0].lower()}{sentences[0][1:]}"
        return (
            "Question: What is the most prominent object in this image?\n"
            f"Answer: {sentences[0]}\n"
            "Question: What else can be seen in the image?\n"
            f"Answer: {rest}"
        )


def load_prompt(kind: str, prompts_dir: str | Path | None = None) -> str:
    name = f"{kind}.txt"
    if prompts_dir is not None:
        return (Path(prompts_dir) / name).read_text(encoding="utf-8")
    return resources.files("geoforge").joinpath(f"assets/prompts/{name}").read_text(encoding="utf-8")
