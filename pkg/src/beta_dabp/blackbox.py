"""The frozen source model behind a hard-label query interface.

Adaptation code only ever sees a :class:`BlackBoxHandle`, whose single
query method returns integer labels. Three transports exist: in-process,
TCP stream and a child process speaking over its stdin/stdout. All three
speak (or emulate) the same newline-delimited JSON protocol::

    request   {"id": 7, "x": [0.1, 0.2]}
    response  {"id": 7, "label": 1}        or  {"id": 7, "error": "dim"}
    info      {"id": 0, "info": true}  ->  {"id": 0, "n_features": 2, "n_classes": 2}
"""
from __future__ import annotations

import json
import logging
import os
import socket
import socketserver
import subprocess
import sys
import threading
from pathlib import Path

import numpy as np

from .data import LabeledVectorSet
from .nn import MlpClassifier, checkpoint_load, fit_classifier

log = logging.getLogger(__name__)

API_ENV = "BETA_API_ADDR"
CHUNK = 256


class ConfigurationError(ValueError):
    pass


class QueryError(RuntimeError):
    pass


class ProtocolError(RuntimeError):
    pass


def train_source_model(
    source: LabeledVectorSet,
    hidden=(64, 64),
    epochs: int = 60,
    lr: float = 0.05,
    batch_size: int = 64,
    momentum: float = 0.9,
    weight_decay: float = 1e-4,
    seed: int = 0,
    n_classes: int | None = None,
) -> MlpClassifier:
    """Plain supervised cross-entropy training on the labeled source split.

    ``n_classes`` defaults to the largest label plus one; when given, every
    label must lie in ``0..n_classes-1``.
    """
    if source.labels is None:
        raise ConfigurationError("source set carries no labels")
    y = source.labels
    k = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if (y < 0).any() or (y >= k).any():
        raise ConfigurationError(f"labels must be class indices in 0..{k - 1}")
    if len(np.unique(y)) < 2:
        raise ConfigurationError("source set must contain at least two classes")
    return fit_classifier(source.features, y, k, hidden, epochs, lr, batch_size, momentum, weight_decay, seed)


class BlackBoxHandle:
    """Hard-label oracle. Subclasses implement ``_query``."""

    transport = "abstract"

    def __init__(self, n_features: int, n_classes: int):
        self.n_features = n_features
        self.n_classes = n_classes
        self.query_count = 0

    def predict_hard(self, batch) -> np.ndarray:
        x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        if x.shape[1] != self.n_features:
            raise ValueError(f"dimension error: black box expects {self.n_features} features, got {x.shape[1]}")
        labels = self._query(x)
        self.query_count += len(x)
        return labels

    def _query(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class InProcessBlackBox(BlackBoxHandle):
    transport = "in-process"

    def __init__(self, model: MlpClassifier):
        super().__init__(model.n_inputs, model.n_classes)
        self.__model = model

    def _query(self, x):
        # argmax takes the lowest index on ties
        return np.argmax(self.__model.logits_np(x), axis=1)


def handle_request(model: MlpClassifier, line: str) -> dict:
    try:
        req = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError):
        return {"id": None, "error": "parse"}
    if not isinstance(req, dict):
        return {"id": None, "error": "parse"}
    rid = req.get("id")
    if req.get("info"):
        return {"id": rid, "n_features": model.n_inputs, "n_classes": model.n_classes}
    x = req.get("x")
    if not isinstance(x, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x):
        return {"id": rid, "error": "bad x"}
    if len(x) != model.n_inputs:
        return {"id": rid, "error": "dim"}
    arr = np.asarray([x], dtype=np.float64)
    if not np.isfinite(arr).all():
        return {"id": rid, "error": "bad x"}
    return {"id": rid, "label": int(np.argmax(model.logits_np(arr), axis=1)[0])}


def serve_stream(model: MlpClassifier, rfile, wfile) -> None:
    for raw in rfile:
        line = raw.decode("utf-8", "replace") if isinstance(raw, bytes) else raw
        if not line.strip():
            continue
        wfile.write((json.dumps(handle_request(model, line)) + "\n").encode())
        wfile.flush()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        serve_stream(self.server.model, self.rfile, self.wfile)


class BlackBoxServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, model: MlpClassifier, address: tuple[str, int]):
        self.model = model
        super().__init__(address, _Handler)
        self._thread = None

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> "BlackBoxServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint must look like host:port, got {endpoint!r}")
    return host or "127.0.0.1", int(port)


def serve(model: MlpClassifier, endpoint: str = "127.0.0.1:0", background: bool = True) -> BlackBoxServer:
    """Bind a TCP server answering the NDJSON protocol; port 0 picks a free port."""
    server = BlackBoxServer(model, parse_endpoint(endpoint))
    if background:
        return server.start()
    try:
        server.serve_forever()
    finally:
        server.server_close()
    return server


class _LineClient(BlackBoxHandle):
    """Shared request/response bookkeeping for the stream transports."""

    retries = 3

    def __init__(self):
        self._next_id = 0
        info = self._roundtrip([{"id": -1, "info": True}])[0]
        try:
            super().__init__(int(info["n_features"]), int(info["n_classes"]))
        except (KeyError, TypeError, ValueError):
            raise ProtocolError(f"malformed info response {info!r}") from None

    def _send_lines(self, lines: list[str]) -> list[str]:
        raise NotImplementedError

    def _reconnect(self) -> None:
        pass

    def _roundtrip(self, reqs: list[dict]) -> list[dict]:
        payload = [json.dumps(r) for r in reqs]
        err = None
        for attempt in range(self.retries + 1):
            try:
                lines = self._send_lines(payload)
                break
            except OSError as e:
                err = e
                self._reconnect()
        else:
            raise QueryError(f"black box unreachable after {self.retries} retries: {err}")
        out = []
        for line in lines:
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError:
                raise ProtocolError(f"malformed response line {line!r}") from None
        return out

    def _query(self, x):
        labels = np.empty(len(x), dtype=np.int64)
        for lo in range(0, len(x), CHUNK):
            rows = x[lo : lo + CHUNK]
            ids = {}
            reqs = []
            for j, row in enumerate(rows):
                rid = self._next_id
                self._next_id += 1
                ids[rid] = lo + j
                reqs.append({"id": rid, "x": [float(v) for v in row]})
            for resp in self._roundtrip(reqs):
                if not isinstance(resp, dict) or resp.get("id") not in ids:
                    raise ProtocolError(f"response with unknown id: {resp!r}")
                if "error" in resp:
                    raise QueryError(f"black box rejected request {resp['id']}: {resp['error']}")
                label = resp.get("label")
                if not isinstance(label, int) or not 0 <= label < self.n_classes:
                    raise ProtocolError(f"label out of range in {resp!r}")
                labels[ids.pop(resp["id"])] = label
            if ids:
                raise ProtocolError(f"{len(ids)} requests went unanswered")
        return labels


class SocketBlackBox(_LineClient):
    transport = "stream socket"

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.address = parse_endpoint(endpoint)
        self.timeout = timeout
        self._sock = None
        self._connect()
        super().__init__()

    def _connect(self):
        err = None
        for _ in range(self.retries + 1):
            try:
                self._sock = socket.create_connection(self.address, timeout=self.timeout)
                self._file = self._sock.makefile("rwb")
                return
            except OSError as e:
                err = e
        raise QueryError(f"cannot connect to {self.address} after {self.retries} retries: {err}")

    def _reconnect(self):
        self.close()
        self._connect()

    def _send_lines(self, lines):
        self._file.write(("\n".join(lines) + "\n").encode())
        self._file.flush()
        out = []
        for _ in lines:
            raw = self._file.readline()
            if not raw:
                raise ConnectionError("server closed the connection")
            out.append(raw.decode())
        return out

    def close(self):
        if self._sock is not None:
            try:
                self._file.close()
                self._sock.close()
            finally:
                self._sock = None


class PipeBlackBox(_LineClient):
    """Runs ``python -m beta_dabp serve --listen -`` as a child and talks over its pipes."""

    transport = "child-process pipe"

    def __init__(self, checkpoint):
        self.checkpoint = str(checkpoint)
        self._proc = None
        self._spawn()
        super().__init__()

    def _spawn(self):
        self._proc = subprocess.Popen(
            [sys.executable, "-m", "beta_dabp", "serve", "--checkpoint", self.checkpoint, "--listen", "-"],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )

    def _reconnect(self):
        self.close()
        self._spawn()

    def _send_lines(self, lines):
        self._proc.stdin.write(("\n".join(lines) + "\n").encode())
        self._proc.stdin.flush()
        out = []
        for _ in lines:
            raw = self._proc.stdout.readline()
            if not raw:
                raise BrokenPipeError("child process closed its output")
            out.append(raw.decode())
        return out

    def close(self):
        if self._proc is not None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
            self._proc.stdout.close()
            self._proc = None


def connect(api: str | None = None) -> BlackBoxHandle:
    """Open a handle from a checkpoint path or a host:port address.

    ``BETA_API_ADDR`` overrides ``api`` when set. A ``pipe:<checkpoint>``
    value starts a child-process server.
    """
    api = os.environ.get(API_ENV) or api
    if not api:
        raise ConfigurationError(f"no black box given (pass an address/checkpoint or set {API_ENV})")
    if api.startswith("pipe:"):
        return PipeBlackBox(api[5:])
    if Path(api).is_file():
        return InProcessBlackBox(checkpoint_load(api))
    return SocketBlackBox(api)
