"""Edge-cloud serving harness.

HTTP wire protocol between a glasses-side client and an inference
server, pluggable backends (mock and remote), deterministic intent
ranking against a label pool, and per-phase latency accounting
(communication / inference / TTS).

Control bodies are JSON; feature tensors travel as a binary frame:
magic "GSTR", version byte 1, little-endian uint32 payload length, then
32-bit floats row-major [frame][token][dim] (base64-embedded in JSON).
"""

from __future__ import annotations

import base64
import json
import statistics
import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import requests

from . import judge as judge_mod
from .clips import FRAMES_PER_CLIP, TOKENS_PER_FRAME, load_clip_manifest, sample_frame_indices
from .landmarks import ENCODING_DIM, encode_landmarks, load_landmark_file

FRAME_MAGIC = b"GSTR"
FRAME_VERSION = 1

VIEWS = ("egocentric", "exocentric")

LATENCY_TOLERANCE_MS = 1.0


class ProtocolError(ValueError):
    """Malformed wire message; carries the offending field name."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class BackendTimeoutError(RuntimeError):
    """Model backend did not answer in time; carries partial latency."""

    def __init__(self, message: str, partial_latency=None):
        super().__init__(message)
        self.partial_latency = partial_latency


def pack_feature_block(tensor) -> bytes:
    """Serialize a [frame][token][dim] float tensor into the binary frame."""
    arr = np.ascontiguousarray(tensor, dtype="<f4")
    if arr.ndim != 3:
        raise ValueError(f"feature tensor must be 3-D, got shape {arr.shape}")
    payload = arr.tobytes()
    return FRAME_MAGIC + bytes([FRAME_VERSION]) + struct.pack("<I", len(payload)) + payload


def unpack_feature_block(data: bytes, shape) -> np.ndarray:
    """Deserialize the binary frame; shape is the declared [frame][token][dim]."""
    if len(data) < 9 or data[:4] != FRAME_MAGIC:
        raise ProtocolError("features", "bad magic in binary feature frame")
    if data[4] != FRAME_VERSION:
        raise ProtocolError("features", f"unsupported frame version {data[4]}")
    (length,) = struct.unpack_from("<I", data, 5)
    payload = data[9:]
    if len(payload) != length:
        raise ProtocolError("features", f"declared payload length {length} != actual {len(payload)}")
    expected = int(np.prod(shape)) * 4
    if length != expected:
        raise ProtocolError("feature_shape", f"shape {list(shape)} needs {expected} bytes, frame has {length}")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float64)


@dataclass
class LatencyBreakdown:
    comm_ms: float
    infer_ms: float
    tts_ms: float
    total_ms: float

    def __post_init__(self):
        if abs(self.total_ms - (self.comm_ms + self.infer_ms + self.tts_ms)) > LATENCY_TOLERANCE_MS:
            raise ValueError("total_ms must equal comm_ms + infer_ms + tts_ms within 1 ms")

    def to_dict(self):
        return {
            "comm_ms": self.comm_ms,
            "infer_ms": self.infer_ms,
            "tts_ms": self.tts_ms,
            "total_ms": self.total_ms,
        }


@dataclass
class InferRequest:
    clip_id: str
    view: str
    intent_pool: list[str] = field(default_factory=list)
    frames: list[str] | None = None  # 8 base64-encoded images
    features: np.ndarray | None = None  # (8, 258, dim) tensor
    landmarks: np.ndarray | None = None  # (8, 1024)

    def to_wire(self) -> dict:
        body = {"clip_id": self.clip_id, "view": self.view, "intent_pool": list(self.intent_pool)}
        if self.frames is not None:
            body["frames"] = list(self.frames)
        if self.features is not None:
            body["feature_shape"] = list(self.features.shape)
            body["features_b64"] = base64.b64encode(pack_feature_block(self.features)).decode("ascii")
        if self.landmarks is not None:
            body["landmarks"] = np.asarray(self.landmarks, dtype=np.float64).tolist()
        return body


@dataclass
class InferResponse:
    clip_id: str
    description: str
    meaning: str
    intention: str
    ranked_intents: list[dict]
    latency: LatencyBreakdown

    @classmethod
    def from_wire(cls, body: dict) -> "InferResponse":
        violations = validate_infer_response(body)
        if violations:
            raise ProtocolError(violations[0][0], violations[0][1])
        lat = body["latency"]
        return cls(
            clip_id=body["clip_id"],
            description=body["description"],
            meaning=body["meaning"],
            intention=body["intention"],
            ranked_intents=list(body["ranked_intents"]),
            latency=LatencyBreakdown(**{k: float(lat[k]) for k in ("comm_ms", "infer_ms", "tts_ms", "total_ms")}),
        )


def validate_infer_request(body) -> list[tuple[str, str]]:
    """Structural validation of an infer request body; returns (field, message) pairs."""
    violations = []
    if not isinstance(body, dict):
        return [("body", "request body must be a JSON object")]
    if not isinstance(body.get("clip_id"), str) or not body.get("clip_id"):
        violations.append(("clip_id", "must be a non-empty string"))
    if body.get("view") not in VIEWS:
        violations.append(("view", f"must be one of {list(VIEWS)}"))
    pool = body.get("intent_pool")
    if not isinstance(pool, list) or not all(isinstance(x, str) for x in pool):
        violations.append(("intent_pool", "must be a list of strings"))
    has_frames = "frames" in body
    has_features = "features_b64" in body
    if has_frames == has_features:
        violations.append(("frames", "exactly one of 'frames' or 'features_b64' is required"))
    if has_frames:
        frames = body["frames"]
        if not isinstance(frames, list) or len(frames) != FRAMES_PER_CLIP:
            violations.append(("frames", f"must be a list of exactly {FRAMES_PER_CLIP} encoded images"))
    if has_features:
        shape = body.get("feature_shape")
        if (not isinstance(shape, list) or len(shape) != 3 or shape[0] != FRAMES_PER_CLIP
                or shape[1] != TOKENS_PER_FRAME):
            violations.append(
                ("feature_shape", f"must be [{FRAMES_PER_CLIP}, {TOKENS_PER_FRAME}, dim]"))
        else:
            try:
                unpack_feature_block(base64.b64decode(body["features_b64"]), shape)
            except (ProtocolError, ValueError) as exc:
                violations.append(("features_b64", str(exc)))
    if "landmarks" in body and body["landmarks"] is not None:
        lm = body["landmarks"]
        ok = (isinstance(lm, list) and len(lm) == FRAMES_PER_CLIP
              and all(isinstance(row, list) and len(row) == ENCODING_DIM for row in lm))
        if not ok:
            violations.append(("landmarks", f"must be {FRAMES_PER_CLIP} rows of {ENCODING_DIM} values"))
    return violations


def validate_infer_response(body) -> list[tuple[str, str]]:
    """Structural validation of an infer response body."""
    violations = []
    if not isinstance(body, dict):
        return [("body", "response body must be a JSON object")]
    for key in ("clip_id", "description", "meaning", "intention"):
        if not isinstance(body.get(key), str):
            violations.append((key, "must be a string"))
    ranked = body.get("ranked_intents")
    if not isinstance(ranked, list):
        violations.append(("ranked_intents", "must be a list"))
    else:
        labels = set()
        prev = None
        for i, entry in enumerate(ranked):
            if not isinstance(entry, dict) or "label" not in entry or "score" not in entry:
                violations.append(("ranked_intents", f"entry {i} must carry 'label' and 'score'"))
                break
            if entry["label"] in labels:
                violations.append(("ranked_intents", f"duplicate label {entry['label']!r}"))
            labels.add(entry["label"])
            if prev is not None and entry["score"] > prev:
                violations.append(("ranked_intents", "scores must be non-increasing"))
            prev = entry["score"]
    lat = body.get("latency")
    if not isinstance(lat, dict):
        violations.append(("latency", "must be an object"))
    else:
        missing = [k for k in ("comm_ms", "infer_ms", "tts_ms", "total_ms") if k not in lat]
        if missing:
            violations.append(("latency", f"missing fields {missing}"))
        else:
            total = lat["comm_ms"] + lat["infer_ms"] + lat["tts_ms"]
            if abs(lat["total_ms"] - total) > LATENCY_TOLERANCE_MS:
                violations.append(("latency", "total_ms must equal the sum of the phases within 1 ms"))
    return violations


class MockBackend:
    """Deterministic in-process backend with configurable per-phase delays."""

    kind = "mock"

    def __init__(self, comm_ms: float = 0.0, infer_ms: float = 0.0, tts_ms: float = 0.0,
                 texts=None, max_in_flight: int = 64, fail_with_timeout: bool = False):
        self.comm_ms = comm_ms
        self.infer_ms = infer_ms
        self.tts_ms = tts_ms
        self.texts = texts or {}
        self.max_in_flight = max_in_flight
        self.fail_with_timeout = fail_with_timeout

    def ready(self) -> bool:
        return True

    def simulate_comm(self) -> None:
        if self.comm_ms:
            time.sleep(self.comm_ms / 1000.0)

    def generate(self, request: InferRequest) -> tuple[str, str, str]:
        if self.fail_with_timeout:
            raise BackendTimeoutError("mock backend configured to time out")
        if self.infer_ms:
            time.sleep(self.infer_ms / 1000.0)
        preset = self.texts.get(request.clip_id)
        if preset is not None:
            return preset["description"], preset["meaning"], preset["intention"]
        return (
            f"A hand gesture performed in clip {request.clip_id}.",
            f"The gesture in clip {request.clip_id} carries a conventional meaning.",
            f"intent of clip {request.clip_id}",
        )

    def simulate_tts(self, text: str) -> str:
        if self.tts_ms:
            time.sleep(self.tts_ms / 1000.0)
        return text


class RemoteBackend:
    """Forwards infer requests to an upstream model server over the same protocol."""

    kind = "remote-model"

    def __init__(self, endpoint: str, timeout: float = 30.0, max_in_flight: int = 8):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.max_in_flight = max_in_flight

    def ready(self) -> bool:
        try:
            reply = requests.get(f"{self.endpoint}/health", timeout=5.0)
            return reply.status_code == 200
        except requests.RequestException:
            return False

    def simulate_comm(self) -> None:
        pass

    def generate(self, request: InferRequest) -> tuple[str, str, str]:
        try:
            reply = requests.post(f"{self.endpoint}/infer", json=request.to_wire(),
                                  timeout=self.timeout)
        except requests.Timeout as exc:
            raise BackendTimeoutError(f"upstream model timed out: {exc}") from exc
        except requests.RequestException as exc:
            raise BackendTimeoutError(f"upstream model unreachable: {exc}") from exc
        if reply.status_code != 200:
            raise ProtocolError("backend", f"upstream returned HTTP {reply.status_code}")
        body = reply.json()
        try:
            return body["description"], body["meaning"], body["intention"]
        except KeyError as exc:
            raise ProtocolError("backend", f"upstream reply missing field {exc}") from exc

    def simulate_tts(self, text: str) -> str:
        return text


def rank_intents(intention_text: str, pool, judge_backend=None) -> list[dict]:
    """Judge-score every pool label against the intention text; sort by
    score descending, label ascending on ties."""
    backend = judge_backend or judge_mod.DeterministicJudge()
    scored = []
    for label in pool:
        req = judge_mod.JudgeRequest(prediction=label, gold=intention_text)
        scored.append({"label": label, "score": backend.score(req).score})
    scored.sort(key=lambda e: (-e["score"], e["label"]))
    return scored


@dataclass
class ServerConfig:
    backend: object
    host: str = "127.0.0.1"
    port: int = 0
    judge_backend: object = None
    request_timeout_s: float = 30.0


class _ServerState:
    def __init__(self, config: ServerConfig):
        self.backend = config.backend
        self.judge_backend = config.judge_backend or judge_mod.DeterministicJudge()
        self.degraded = not config.backend.ready()
        self.in_flight = threading.BoundedSemaphore(getattr(config.backend, "max_in_flight", 64))


def _request_from_wire(body: dict) -> InferRequest:
    features = None
    if "features_b64" in body:
        features = unpack_feature_block(base64.b64decode(body["features_b64"]), body["feature_shape"])
    landmarks = None
    if body.get("landmarks") is not None:
        landmarks = np.asarray(body["landmarks"], dtype=np.float64)
    return InferRequest(
        clip_id=body["clip_id"],
        view=body["view"],
        intent_pool=list(body.get("intent_pool", [])),
        frames=body.get("frames"),
        features=features,
        landmarks=landmarks,
    )


def handle_infer(state: _ServerState, body: dict) -> dict:
    """Run the three-phase pipeline and assemble the response body."""
    violations = validate_infer_request(body)
    if violations:
        raise ProtocolError(violations[0][0], violations[0][1])
    request = _request_from_wire(body)

    with state.in_flight:
        t0 = time.monotonic()
        state.backend.simulate_comm()
        t1 = time.monotonic()
        try:
            description, meaning, intention = state.backend.generate(request)
        except BackendTimeoutError as exc:
            t_fail = time.monotonic()
            exc.partial_latency = {
                "comm_ms": (t1 - t0) * 1000.0,
                "infer_ms": (t_fail - t1) * 1000.0,
                "tts_ms": 0.0,
            }
            raise
        t2 = time.monotonic()
        state.backend.simulate_tts(intention)
        t3 = time.monotonic()

    comm_ms = (t1 - t0) * 1000.0
    infer_ms = (t2 - t1) * 1000.0
    tts_ms = (t3 - t2) * 1000.0
    latency = LatencyBreakdown(comm_ms=comm_ms, infer_ms=infer_ms, tts_ms=tts_ms,
                               total_ms=comm_ms + infer_ms + tts_ms)
    ranked = rank_intents(intention, request.intent_pool, state.judge_backend)
    return {
        "clip_id": request.clip_id,
        "description": description,
        "meaning": meaning,
        "intention": intention,
        "ranked_intents": ranked,
        "latency": latency.to_dict(),
    }


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, status: int, payload: dict) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _read_json(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ProtocolError("body", f"request body is not valid JSON: {exc}") from exc

    def do_GET(self):
        state: _ServerState = self.server.state
        if self.path == "/health":
            status = "degraded" if state.degraded else "ok"
            self._send_json(200, {"status": status, "backend": state.backend.kind})
        else:
            self._send_json(404, {"error": {"type": "protocol", "message": f"unknown path {self.path}"}})

    def do_POST(self):
        state: _ServerState = self.server.state
        try:
            body = self._read_json()
            if self.path == "/infer":
                if state.degraded:
                    self._send_json(503, {"error": {"type": "backend-unavailable",
                                                    "message": "model backend not ready"}})
                    return
                self._send_json(200, handle_infer(state, body))
            elif self.path == "/judge":
                self._handle_judge(state, body)
            else:
                self._send_json(404, {"error": {"type": "protocol",
                                                "message": f"unknown path {self.path}"}})
        except ProtocolError as exc:
            self._send_json(400, {"error": {"type": "protocol", "field": exc.field,
                                            "message": str(exc)}})
        except BackendTimeoutError as exc:
            self._send_json(504, {"error": {"type": "timeout", "message": str(exc),
                                            "partial_latency": exc.partial_latency}})

    def _handle_judge(self, state: _ServerState, body: dict) -> None:
        for key in ("prediction", "gold"):
            if not isinstance(body.get(key), str) or not body[key].strip():
                raise ProtocolError(key, "must be a non-empty string")
        req = judge_mod.JudgeRequest(prediction=body["prediction"], gold=body["gold"],
                                     prompt_variant=int(body.get("variant", 0)))
        self._send_json(200, {"score": state.judge_backend.score(req).score})


class ServerHandle:
    """Running server plus its worker thread; stop() shuts it down."""

    def __init__(self, server: ThreadingHTTPServer, thread: threading.Thread):
        self._server = server
        self._thread = thread
        self.host, self.port = server.server_address[:2]

    @property
    def address(self) -> str:
        return f"http://{self.host}:{self.port}"

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5.0)


def serve(config: ServerConfig) -> ServerHandle:
    """Start the inference server; raises OSError if the port is taken."""
    server = ThreadingHTTPServer((config.host, config.port), _Handler)
    server.daemon_threads = True
    server.state = _ServerState(config)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return ServerHandle(server, thread)


def client_send(clip_manifest_path, landmark_path, server_address: str,
                intent_pool=None, timeout: float = 30.0) -> InferResponse:
    """Glasses-side client: parse local files, sample frames, encode
    landmarks, frame the request, and return the parsed response.

    File-format errors surface before any network activity.
    """
    meta = load_clip_manifest(clip_manifest_path)
    clip = load_landmark_file(landmark_path)
    indices = sample_frame_indices(meta.n_frames, FRAMES_PER_CLIP)
    by_index = {f.frame_index: f for f in clip.frames}
    rows = []
    for idx in indices:
        frame = by_index.get(idx)
        if frame is None:
            raise ValueError(f"landmark file has no record for sampled frame {idx}")
        rows.append(encode_landmarks(frame).values)
    landmarks = np.stack(rows)

    # vision rows are the backend's concern; the client frames zeros plus
    # the landmark token so the server can check the 258-token layout
    tensor = np.zeros((FRAMES_PER_CLIP, TOKENS_PER_FRAME, ENCODING_DIM), dtype=np.float32)
    tensor[:, TOKENS_PER_FRAME - 1, :] = landmarks

    request = InferRequest(
        clip_id=meta.clip_id,
        view=meta.view,
        intent_pool=list(intent_pool or []),
        features=tensor,
        landmarks=landmarks,
    )
    reply = requests.post(f"{server_address.rstrip('/')}/infer", json=request.to_wire(),
                          timeout=timeout)
    if reply.status_code != 200:
        raise ProtocolError("response", f"server returned HTTP {reply.status_code}: {reply.text[:200]}")
    return InferResponse.from_wire(reply.json())


def _percentile(values, q):
    return float(np.percentile(np.asarray(values), q))


def bench_latency(server_address: str, request_body: dict, n_requests: int,
                  concurrency: int = 8, timeout: float = 60.0) -> dict:
    """Aggregate per-phase latency over n_requests; transport errors are
    counted separately rather than aborting the run."""
    phases = {"comm_ms": [], "infer_ms": [], "tts_ms": [], "total_ms": []}
    errors = 0

    def one(_):
        return requests.post(f"{server_address.rstrip('/')}/infer", json=request_body,
                             timeout=timeout)

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        replies = list(pool.map(one, range(n_requests)))
    for reply in replies:
        if reply.status_code != 200:
            errors += 1
            continue
        lat = reply.json()["latency"]
        for key in phases:
            phases[key].append(lat[key])

    report = {"n_requests": n_requests, "errors": errors, "phases": {}}
    for key, values in phases.items():
        if values:
            report["phases"][key] = {
                "mean": statistics.fmean(values),
                "p50": _percentile(values, 50),
                "p95": _percentile(values, 95),
            }
    return report
