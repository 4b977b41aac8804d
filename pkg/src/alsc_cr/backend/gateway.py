"""Clients for trainer backends plus the typed gateway the orchestrator uses.

Three transports: in-process (the mock), a child process speaking
newline-delimited JSON over stdio, and HTTP POST. The gateway adds lineage
tracking on top of the raw protocol: the wire only carries model ids, so the
chain of job ids behind each model is reconstructed client-side.
"""

from __future__ import annotations

import json
import logging
import queue
import subprocess
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Sequence

from ..errors import (
    BackendTimeout,
    BackendUnavailable,
    MalformedRecord,
    TrainFailed,
    UnknownModel,
)
from . import protocol
from .mock import MockBackend


logger = logging.getLogger(__name__)


class InProcessClient:
    """Direct dispatch into a backend object living in this process."""

    def __init__(self, backend):
        self.backend = backend

    def request(self, message: dict) -> dict:
        return self.backend.handle(message)

    def close(self):
        pass


class StdioBackendClient:
    """Child process speaking one JSON message per line on stdin/stdout."""

    def __init__(self, command: Sequence[str], timeout: float = protocol.DEFAULT_TIMEOUT_REAL):
        self.timeout = timeout
        try:
            self.process = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BackendUnavailable(f"cannot start backend {command!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        assert self.process.stdout is not None
        for line in self.process.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def request(self, message: dict) -> dict:
        if self.process.poll() is not None:
            raise BackendUnavailable("backend process has exited")
        assert self.process.stdin is not None
        try:
            self.process.stdin.write(protocol.encode(message) + "\n")
            self.process.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BackendUnavailable(f"backend pipe closed: {exc}") from exc
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self.process.kill()
            raise BackendTimeout(f"no response within {self.timeout}s") from None
        if line is None:
            raise BackendUnavailable("backend closed its output stream")
        return protocol.decode(line)

    def close(self):
        if self.process.poll() is None:
            try:
                self.request(protocol.shutdown_request())
            except (BackendUnavailable, BackendTimeout, MalformedRecord):
                pass
        if self.process.stdin:
            self.process.stdin.close()
        self.process.wait(timeout=10)


class HttpBackendClient:
    """POSTs each protocol message as a JSON body and reads the JSON reply."""

    def __init__(self, endpoint: str, timeout: float = protocol.DEFAULT_TIMEOUT_REAL):
        self.endpoint = endpoint
        self.timeout = timeout

    def request(self, message: dict) -> dict:
        body = protocol.encode(message).encode("utf-8")
        req = urllib.request.Request(
            self.endpoint, data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return protocol.decode(resp.read().decode("utf-8"))
        except TimeoutError as exc:
            raise BackendTimeout(f"no response within {self.timeout}s") from exc
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, TimeoutError):
                raise BackendTimeout(f"no response within {self.timeout}s") from exc
            raise BackendUnavailable(f"{self.endpoint}: {exc}") from exc

    def close(self):
        pass


class Gateway:
    """Typed train/predict calls over any client, with lineage bookkeeping."""

    def __init__(self, client):
        self.client = client
        self._lineage: dict[str, tuple[str, ...]] = {}

    def register_model(self, model_id: str, lineage: Sequence[str]):
        self._lineage[model_id] = tuple(lineage)

    def known_model(self, model_id: str) -> bool:
        return model_id in self._lineage

    def train(self, job: protocol.TrainJob) -> protocol.ModelHandle:
        response = self.client.request(protocol.train_request(job))
        if not response.get("ok"):
            code = response.get("code", "TrainFailed")
            message = response.get("message", "")
            if code == "Timeout":
                raise BackendTimeout(message)
            raise TrainFailed(code, message)
        parent: tuple[str, ...] = ()
        if job.init_from is not None:
            parent = self._lineage.get(job.init_from, ())
            if not parent:
                logger.warning(
                    "init_from model %s has no known lineage; chain will be short",
                    job.init_from,
                )
        lineage = parent + (job.job_id,)
        handle = protocol.ModelHandle(
            model_id=response["model_id"],
            lineage=lineage,
            best_val_metric=float(response["best_val_metric"]),
        )
        self._lineage[handle.model_id] = lineage
        return handle

    def predict(self, model_id: str, inputs: Sequence[str]) -> list[str]:
        response = self.client.request(protocol.predict_request(model_id, list(inputs)))
        if not response.get("ok"):
            code = response.get("code", "")
            if code == "UnknownModel":
                raise UnknownModel(model_id)
            raise BackendUnavailable(response.get("message", code))
        outputs = response.get("outputs")
        if not isinstance(outputs, list) or len(outputs) != len(inputs):
            raise MalformedRecord("backend returned a malformed outputs list")
        return [str(o) for o in outputs]

    def ping(self) -> bool:
        try:
            return bool(self.client.request(protocol.ping_request()).get("ok"))
        except (BackendUnavailable, BackendTimeout):
            return False

    def close(self):
        self.client.close()


def make_client(config: dict):
    """Build a client from an experiment config's backend section.

    kinds: mock ({"skill_profile": list|path, "state_dir": path}),
    stdio ({"command": [...]}), http ({"endpoint": url}).
    """
    kind = config.get("kind", "mock")
    if kind == "mock":
        profile = config.get("skill_profile")
        if isinstance(profile, str):
            with open(profile, "r", encoding="utf-8") as fh:
                profile = json.load(fh)
        return InProcessClient(MockBackend(skill_profile=profile, state_dir=config.get("state_dir")))
    if kind == "stdio":
        timeout = float(config.get("timeout", protocol.DEFAULT_TIMEOUT_REAL))
        return StdioBackendClient(config["command"], timeout=timeout)
    if kind == "http":
        timeout = float(config.get("timeout", protocol.DEFAULT_TIMEOUT_REAL))
        return HttpBackendClient(config["endpoint"], timeout=timeout)
    raise ValueError(f"unknown backend kind {kind!r}")


class _Handler(BaseHTTPRequestHandler):
    backend: MockBackend

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        try:
            request = protocol.decode(self.rfile.read(length).decode("utf-8"))
            response = self.backend.handle(request)
        except MalformedRecord as exc:
            response = protocol.error_response(exc.code, exc.message)
        body = protocol.encode(response).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


def serve_http(backend: MockBackend, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Expose a backend over HTTP for tests; caller drives serve_forever."""
    handler = type("BoundHandler", (_Handler,), {"backend": backend})
    return ThreadingHTTPServer((host, port), handler)
