"""Plan backends: fixture lookup and a chat-completion HTTP client."""

from __future__ import annotations

import json
import os
import re
import socket
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable, Optional, Protocol

from stagewise import instrument
from stagewise.errors import AuthError, BackendUnavailable, NotRegistered
from stagewise.plan.core import Plan, PromptSpec, build_prompt, parse_plan


class Backend(Protocol):
    source: str

    def complete(self, prompt: str) -> str: ...


@lru_cache(maxsize=1)
def fixture_index() -> dict[str, str]:
    """Fixture name to task description."""
    text = resources.files("stagewise.plan").joinpath("fixtures/index.tsv").read_text(encoding="utf-8")
    out = {}
    for line in text.splitlines():
        if line.strip():
            name, desc = line.split("\t", 1)
            out[name] = desc
    return out


def fixture_names() -> list[str]:
    return list(fixture_index())


def fixture_text(name: str) -> str:
    if name not in fixture_index():
        raise NotRegistered(f"no fixture plan named {name!r}")
    path = resources.files("stagewise.plan").joinpath(f"fixtures/{name}.txt")
    return path.read_text(encoding="utf-8").rstrip("\n")


def _fixture_for(name: str) -> str:
    """Accept a fixture name or a registered toy task name."""
    if name in fixture_index():
        return name
    from stagewise.world.tasks import build_task, registered_tasks

    if name in registered_tasks():
        return build_task(name).fixture
    raise NotRegistered(f"unknown task {name!r}")


def task_description(name: str) -> str:
    return fixture_index()[_fixture_for(name)]


@dataclass(frozen=True)
class ScriptedBackend:
    """Deterministic backend replaying stored plans.

    With ``task`` set the prompt is ignored; otherwise the fixture is chosen by
    the task-description line of the prompt.
    """

    task: Optional[str] = None
    source: str = "scripted"

    def complete(self, prompt: str) -> str:
        if self.task is not None:
            return fixture_text(_fixture_for(self.task))
        m = re.search(r"^Task description: (.*)$", prompt, flags=re.M)
        desc = m.group(1).strip() if m else ""
        for name, d in fixture_index().items():
            if d == desc:
                return fixture_text(name)
        raise NotRegistered(f"no fixture plan for task description {desc!r}")


_RETRYABLE = (urllib.error.URLError, ConnectionError, socket.timeout, TimeoutError)


@dataclass
class RemoteBackend:
    """Single-turn chat-completion client with temperature 0.

    The credential is read from ``credential_env`` when a request is made,
    not when the backend is configured.
    """

    url: str
    model: str = "gpt-4"
    credential_env: str = "STAGEWISE_API_KEY"
    timeout_s: float = 30.0
    attempts: int = 3
    backoff_s: float = 0.5
    sleep: Callable[[float], None] = time.sleep
    source: str = "remote"

    def _request(self, prompt: str, key: str) -> str:
        body = json.dumps({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }).encode("utf-8")
        req = urllib.request.Request(self.url, data=body, method="POST", headers={
            "Content-Type": "application/json",
            "Authorization": f"Bearer {key}",
        })
        with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
        return payload["choices"][0]["message"]["content"]

    def complete(self, prompt: str) -> str:
        key = os.environ.get(self.credential_env)
        if not key:
            raise AuthError(f"environment variable {self.credential_env} is not set")
        last: Exception | None = None
        for attempt in range(self.attempts):
            try:
                return self._request(prompt, key)
            except urllib.error.HTTPError as e:
                if e.code in (401, 403):
                    raise AuthError(f"endpoint rejected the credential (HTTP {e.code})") from e
                if e.code < 500 and e.code != 429:
                    raise BackendUnavailable(f"endpoint returned HTTP {e.code}") from e
                last = e
            except _RETRYABLE as e:
                last = e
            except (KeyError, IndexError, TypeError, ValueError) as e:
                raise BackendUnavailable(f"malformed completion response: {e}") from e
            if attempt + 1 < self.attempts:
                self.sleep(self.backoff_s * 2 ** attempt)
        raise BackendUnavailable(f"no response after {self.attempts} attempts: {last}")


def query_backend(backend: Backend, prompt: str) -> str:
    instrument.hit("plan.query_backend")
    return backend.complete(prompt)


def make_backend(kind: str = "scripted", task: Optional[str] = None, url: str = "",
                 model: str = "gpt-4", credential_env: str = "STAGEWISE_API_KEY") -> Backend:
    if kind == "scripted":
        return ScriptedBackend(task)
    if kind == "remote":
        return RemoteBackend(url, model, credential_env)
    raise NotRegistered(f"unknown backend {kind!r}")


def plan_for_task(task: str, backend: Optional[Backend] = None) -> Plan:
    """Prompt the backend for ``task`` and parse its answer (unfiltered)."""
    backend = backend or ScriptedBackend()
    prompt = build_prompt(PromptSpec(task_description(task)))
    return parse_plan(query_backend(backend, prompt), backend.source)
