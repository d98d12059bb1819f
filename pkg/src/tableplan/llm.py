"""Chat-completion client implementing the external planner and perception
backend contracts, with schema-constrained parsing and a record/replay fixture
store so the external path is testable without any network."""

from __future__ import annotations

import hashlib
import json
import os
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

from .graph import GraphInvariantError, RelationGraph
from .orchestrator import BackendError
from .perception import gate_graph
from .planner import BundleInvariantError, Feedback, StagePlanBundle
from .predicates import Goal

PLANNER_TEMPLATE = "planner_v1"
PERCEPTION_TEMPLATE = "perception_v1"


class TransportError(BackendError):
    pass


class AuthError(BackendError):
    pass


class SchemaError(BackendError):
    pass


class CacheMissError(BackendError):
    pass


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str = "https://localhost/v1/chat/completions"
    model: str = "planner-base"
    auth_env: str = "TABLEPLAN_API_TOKEN"
    timeout_s: float = 30.0
    max_retries: int = 1
    temperature: float = 0.0

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("retries must be non-negative")


Transport = Callable[[str, dict, dict, float], dict]


def default_transport(url: str, payload: dict, headers: dict,
                      timeout: float) -> dict:
    req = urllib.request.Request(
        url, data=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json", **headers})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return json.loads(resp.read().decode())
    except urllib.error.URLError as exc:
        raise TransportError(f"request to {url} failed: {exc}") from exc


def request_key(payload: dict, template_version: str) -> str:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(f"{template_version}\n{body}".encode()).hexdigest()


class FixtureStore:
    """Line-delimited request/response records keyed by request hash."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.records: dict[str, dict] = {}
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self.records[rec["key"]] = rec

    def lookup(self, key: str) -> dict:
        if key not in self.records:
            raise CacheMissError(f"no fixture for request {key[:12]}…")
        return self.records[key]["response"]

    def store(self, key: str, request: dict, response: dict) -> None:
        if key in self.records:
            return
        rec = {"key": key, "request": request, "response": response}
        self.records[key] = rec
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _load_template(name: str) -> str:
    return (resources.files("tableplan") / "prompts" / f"{name}.txt").read_text()


@dataclass
class _BaseClient:
    config: BackendConfig = field(default_factory=BackendConfig)
    mode: str = "live"  # "live" | "record" | "replay"
    fixture_path: str | Path | None = None
    transport: Transport | None = None
    template_version: str = PLANNER_TEMPLATE

    def __post_init__(self):
        if self.mode not in ("live", "record", "replay"):
            raise ValueError(f"unknown client mode {self.mode!r}")
        self.store = (FixtureStore(self.fixture_path)
                      if self.fixture_path is not None else None)
        if self.mode in ("record", "replay") and self.store is None:
            raise ValueError(f"{self.mode} mode needs a fixture path")

    def _headers(self) -> dict:
        token = os.environ.get(self.config.auth_env)
        if token is None:
            if self.transport is None:
                raise AuthError(
                    f"auth token env var {self.config.auth_env} is not set")
            return {}
        return {"Authorization": f"Bearer {token}"}

    def _exchange(self, payload: dict) -> str:
        key = request_key(payload, self.template_version)
        if self.mode == "replay":
            response = self.store.lookup(key)
        else:
            transport = self.transport or default_transport
            headers = self._headers() if transport is default_transport else {}
            try:
                response = transport(self.config.endpoint, payload, headers,
                                     self.config.timeout_s)
            except BackendError:
                raise
            except Exception as exc:
                raise TransportError(str(exc)) from exc
            if self.mode == "record":
                self.store.store(key, payload, response)
        try:
            return response["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise SchemaError(f"malformed completion envelope: {exc}") from exc

    def _payload(self, prompt: str, system: str) -> dict:
        return {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "system", "content": system},
                         {"role": "user", "content": prompt}],
        }


class RemotePlannerBackend(_BaseClient):
    """Planner backend contract against a chat-completion endpoint: renders
    the canonical graph, goal and feedback into the prompt template and parses
    the reply as a stage-plan bundle, with one schema-repair round trip."""

    def __init__(self, config: BackendConfig | None = None, mode: str = "live",
                 fixture_path: str | Path | None = None,
                 transport: Transport | None = None):
        super().__init__(config or BackendConfig(), mode, fixture_path,
                         transport, PLANNER_TEMPLATE)
        self.system = _load_template(PLANNER_TEMPLATE)

    def generate(self, graph: RelationGraph, goal: Goal,
                 feedback: Feedback | None) -> StagePlanBundle:
        prompt = json.dumps({
            "graph": graph.to_json(),
            "goal": goal.to_json(),
            "feedback": feedback.to_json() if feedback else None,
        }, sort_keys=True)
        payload = self._payload(prompt, self.system)
        content = self._exchange(payload)
        try:
            return self._parse(content)
        except SchemaError as first:
            repair = dict(payload)
            repair["messages"] = payload["messages"] + [
                {"role": "assistant", "content": content},
                {"role": "user", "content":
                 f"Your reply violated the plan schema: {first}. "
                 "Respond with corrected JSON only."}]
            content = self._exchange(repair)
            try:
                return self._parse(content)
            except SchemaError as second:
                raise SchemaError(
                    f"schema violation persisted after repair: {second}") from second

    @staticmethod
    def _parse(content: str) -> StagePlanBundle:
        if not content or not content.strip():
            raise SchemaError("empty response body")
        try:
            doc = json.loads(content)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"response is not JSON: {exc}") from exc
        try:
            return StagePlanBundle.from_json(doc).validate()
        except (BundleInvariantError, KeyError, ValueError, TypeError) as exc:
            raise SchemaError(f"bundle schema violation: {exc}") from exc


class RemotePerceptionBackend(_BaseClient):
    """Perception backend contract: ships the reference graph's canonical text
    as the raw observation and expects a relation graph back; whatever returns
    must pass the graph invariant gate."""

    def __init__(self, config: BackendConfig | None = None, mode: str = "live",
                 fixture_path: str | Path | None = None,
                 transport: Transport | None = None,
                 reference: object = None):
        super().__init__(config or BackendConfig(), mode, fixture_path,
                         transport, PERCEPTION_TEMPLATE)
        self.system = _load_template(PERCEPTION_TEMPLATE)
        self.reference = reference

    def observe(self, world, goal: Goal | None, timestamp: int) -> RelationGraph:
        from .perception import perceive
        raw = perceive(world, timestamp=timestamp).canonical()
        prompt = json.dumps({
            "observation": raw,
            "goal": goal.to_json() if goal else None,
        }, sort_keys=True)
        content = self._exchange(self._payload(prompt, self.system))
        try:
            graph = RelationGraph.from_json(json.loads(content))
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            raise SchemaError(f"graph schema violation: {exc}") from exc
        try:
            return gate_graph(graph)
        except GraphInvariantError as exc:
            raise SchemaError(f"graph failed invariant gate: {exc}") from exc


def wrap_bundle_response(bundle: StagePlanBundle) -> dict:
    """Package a bundle as a chat-completion response; used when recording
    fixtures from a scripted responder."""
    return {"choices": [{"message": {"role": "assistant",
                                     "content": bundle.canonical()}}]}
