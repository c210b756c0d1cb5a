"""Minimal JSON-over-HTTP inference endpoint.

``POST /classify`` takes one raw (unscaled) feature window keyed by
category, applies the stored min-max scaler (out-of-range values are
clamped), runs the forward pass, and returns the predicted cohort with the
softmax probabilities.  ``GET /health`` reports model metadata.  The server
holds the model and scaler immutably, so concurrent requests are safe and
responses depend only on the request body.

Status codes: 400 for undecodable or non-numeric bodies, 415 for a missing
``application/json`` content type, 422 when the category set or a category
width does not match the served feature spec.
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .datapipe import MinMaxScaler
from .features import COHORTS, FeatureSpec
from .network import MaskedNetwork


class _RequestProblem(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def vector_from_payload(payload, spec: FeatureSpec) -> np.ndarray:
    if not isinstance(payload, dict):
        raise _RequestProblem(400, "body must be a JSON object keyed by feature category")
    missing = [c for c in spec.categories if c not in payload]
    extra = sorted(set(payload) - set(spec.categories))
    if missing or extra:
        raise _RequestProblem(
            422, f"feature categories must be exactly {list(spec.categories)}"
            + (f"; missing {missing}" if missing else "")
            + (f"; unexpected {extra}" if extra else ""))
    parts: list[float] = []
    for c in spec.categories:
        values = payload[c]
        if isinstance(values, (int, float)) and not isinstance(values, bool):
            values = [values]
        if not isinstance(values, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
            raise _RequestProblem(400, f"{c} must be a number or a list of numbers")
        if len(values) != spec.width_of(c):
            raise _RequestProblem(
                422, f"{c}: expected {spec.width_of(c)} values, got {len(values)}")
        parts.extend(float(v) for v in values)
    return np.array(parts, dtype=np.float64)


def build_server(net: MaskedNetwork, spec: FeatureSpec, scaler: MinMaxScaler,
                 host: str = "127.0.0.1", port: int = 8000) -> ThreadingHTTPServer:
    if net.input_width != spec.total_width:
        raise ValueError(f"model input width {net.input_width} does not match "
                         f"feature spec width {spec.total_width}")
    if scaler.min_ is None or scaler.min_.size != spec.total_width:
        raise ValueError("scaler width does not match the feature spec")

    health = {
        "status": "ok",
        "widths": list(net.widths),
        "categories": list(spec.categories),
        "total_width": spec.total_width,
        "activation_slope": net.slope,
        "params": net.count_params(),
        "flops": net.count_flops(),
    }

    class Handler(BaseHTTPRequestHandler):
        def _send_json(self, status: int, obj) -> None:
            body = json.dumps(obj).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):  # noqa: N802
            if self.path == "/health":
                self._send_json(200, health)
            else:
                self._send_json(404, {"error": "unknown path; use /health or /classify"})

        def do_POST(self):  # noqa: N802
            if self.path != "/classify":
                self._send_json(404, {"error": "unknown path; use /health or /classify"})
                return
            ctype = (self.headers.get("Content-Type") or "").split(";")[0].strip()
            if ctype != "application/json":
                self._send_json(415, {"error": "Content-Type must be application/json"})
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length))
            except (ValueError, json.JSONDecodeError):
                self._send_json(400, {"error": "request body is not valid JSON"})
                return
            try:
                raw = vector_from_payload(payload, spec)
            except _RequestProblem as problem:
                self._send_json(problem.status, {"error": problem.message})
                return
            scaled = scaler.transform(raw[None, :])
            probs, _ = net.forward(scaled)
            pred = int(np.argmax(probs[0]))
            self._send_json(200, {
                "cohort": COHORTS[pred],
                "probabilities": [float(p) for p in probs[0]],
            })

        def log_message(self, fmt, *args):  # keep the test output quiet
            pass

    return ThreadingHTTPServer((host, port), Handler)
