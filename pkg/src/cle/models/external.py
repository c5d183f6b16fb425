"""Adapters for models living in another process or behind HTTP.

Both transports speak line-oriented JSON::

    request:  {"id": <int>, "instances": [<payload>, ...]}
    response: {"id": <int>, "probs": [[p_1, ..., p_c], ...]}

Payloads are strings for text, value lists (schema column order) for tabular
rows and ``{"ppm_base64": ...}`` for images.  Request ids increase strictly
per connection and every response must echo the id of its request.
"""
import base64
import itertools
import json
import logging
import math
import queue
import shlex
import subprocess
import threading
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..errors import ModelFailure, PeerExit, ProtocolError, Timeout
from ..netpbm import encode_ppm
from .base import BlackBoxModel

log = logging.getLogger(__name__)

BATCH_SIZE = 256
DEFAULT_TIMEOUT = 60.0
SUM_TOLERANCE = 1e-6


def chunks(n, size=BATCH_SIZE):
    """Contiguous ``(start, stop)`` ranges covering ``range(n)``."""
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def encode_instance(instance, modality):
    if modality == "image":
        return {"ppm_base64": base64.b64encode(encode_ppm(instance)).decode("ascii")}
    if modality == "tabular":
        return [v.item() if isinstance(v, np.generic) else v for v in instance]
    return instance


def encode_request(req_id, instances, modality):
    body = {"id": req_id, "instances": [encode_instance(x, modality) for x in instances]}
    return json.dumps(body, separators=(",", ":"), ensure_ascii=False) + "\n"


def parse_response(line, expected_id, n_instances, n_classes=None):
    """Validate one response line; returns an ``(n, c)`` probability array."""
    try:
        msg = json.loads(line)
    except (json.JSONDecodeError, TypeError) as exc:
        raise ProtocolError(f"malformed response line: {line!r:.200}") from exc
    if not isinstance(msg, dict) or "id" not in msg or "probs" not in msg:
        raise ProtocolError("response must be an object with 'id' and 'probs'")
    if msg["id"] != expected_id:
        raise ProtocolError(f"response id {msg['id']!r} does not match request id {expected_id}")
    probs = msg["probs"]
    if not isinstance(probs, list) or len(probs) != n_instances:
        raise ProtocolError(f"expected {n_instances} probability rows")
    try:
        arr = np.array(probs, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ProtocolError("probability rows must be equal-length numeric lists") from exc
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise ProtocolError("probability rows must be equal-length numeric lists")
    if n_classes is not None and arr.shape[1] != n_classes:
        raise ProtocolError(f"expected {n_classes} classes, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)) or np.any(arr < -SUM_TOLERANCE):
        raise ProtocolError("probabilities must be finite and non-negative")
    sums = arr.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > SUM_TOLERANCE)
    if bad.size:
        raise ProtocolError(f"probabilities of row {bad[0]} sum to {sums[bad[0]]:.6g}")
    return arr


class _External(BlackBoxModel):
    def __init__(self, classes=None, modality="text", batch_size=BATCH_SIZE,
                 timeout=DEFAULT_TIMEOUT):
        self.classes = list(classes) if classes is not None else None
        self.modality = modality
        self.batch_size = batch_size
        self.timeout = timeout
        self._ids = itertools.count(1)
        self._id_lock = threading.Lock()

    def _next_id(self):
        with self._id_lock:
            return next(self._ids)

    def _accept(self, arr):
        if self.classes is None:
            self.classes = [str(i) for i in range(arr.shape[1])]
        return arr

    def predict_proba(self, instances):
        instances = list(instances)
        if self.classes is None and instances:
            first = self._predict_proba(instances[:1])
            if len(instances) == 1:
                return first
            return np.vstack([first, super().predict_proba(instances[1:])])
        return super().predict_proba(instances)


class SubprocessModel(_External):
    """Talks to a child process over its stdin/stdout; one batch in flight."""

    reentrant = False

    def __init__(self, command, classes=None, modality="text", batch_size=BATCH_SIZE,
                 timeout=DEFAULT_TIMEOUT):
        super().__init__(classes, modality, batch_size, timeout)
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self.proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                         text=True, encoding="utf-8", bufsize=1)
        except OSError as exc:
            raise ModelFailure(f"cannot start model command {argv!r}: {exc}") from exc
        self._lines = queue.Queue()
        self._lock = threading.Lock()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _roundtrip(self, batch):
        req_id = self._next_id()
        try:
            self.proc.stdin.write(encode_request(req_id, batch, self.modality))
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise PeerExit(f"model process exited (code {self.proc.poll()})") from exc
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise Timeout(f"no response within {self.timeout}s") from None
        if line is None:
            self._lines.put(None)
            raise PeerExit(f"model process exited (code {self.proc.wait()})")
        n_classes = len(self.classes) if self.classes is not None else None
        return self._accept(parse_response(line, req_id, len(batch), n_classes))

    def _predict_proba(self, instances):
        with self._lock:
            return np.vstack([self._roundtrip(instances[s:e])
                              for s, e in chunks(len(instances), self.batch_size)])

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self.proc.kill()
                self.proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class HttpModel(_External):
    """POSTs each request line to ``endpoint``; the body of the reply is the response line."""

    reentrant = True

    def __init__(self, endpoint, classes=None, modality="text", batch_size=BATCH_SIZE,
                 timeout=DEFAULT_TIMEOUT, max_in_flight=4):
        super().__init__(classes, modality, batch_size, timeout)
        self.endpoint = endpoint
        self.max_in_flight = max_in_flight

    def _roundtrip(self, batch):
        req_id = self._next_id()
        data = encode_request(req_id, batch, self.modality).encode("utf-8")
        req = urllib.request.Request(self.endpoint, data=data, method="POST",
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = resp.read().decode("utf-8")
        except TimeoutError as exc:
            raise Timeout(f"no response within {self.timeout}s") from exc
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, TimeoutError):
                raise Timeout(f"no response within {self.timeout}s") from exc
            raise PeerExit(f"HTTP peer unreachable: {exc.reason}") from exc
        n_classes = len(self.classes) if self.classes is not None else None
        return self._accept(parse_response(body, req_id, len(batch), n_classes))

    def _predict_proba(self, instances):
        spans = chunks(len(instances), self.batch_size)
        if len(spans) == 1 or self.max_in_flight <= 1:
            return np.vstack([self._roundtrip(instances[s:e]) for s, e in spans])
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            parts = list(pool.map(lambda se: self._roundtrip(instances[se[0]:se[1]]), spans))
        return np.vstack(parts)


def n_batches(n, size=BATCH_SIZE):
    return math.ceil(n / size)
