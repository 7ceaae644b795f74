"""HTTP API for interactive scoring and counterfactual exploration.

Endpoints (JSON bodies, versioned under /api/v1):

- GET  /healthz                      liveness probe
- GET  /api/v1/schema                feature descriptors for form building
- POST /api/v1/score                 {"features": {...}} -> {"probability": p}
- POST /api/v1/counterfactuals       {"features": {...}, "m", "temperature",
                                      "seed"?, "weights"?, "constraints"?}

The counterfactual response carries the input probability and m samples
sorted by log-likelihood descending, each with decoded features, its
probability, log-likelihood, weighted distance to the input (under the
optional per-feature weights), and the set of changed features.

Generation-time constraints are interactive conveniences, applied in
encoded space before scoring: "freeze" pins listed features back to the
input's coordinate; "monotone_up" clamps them to at least the input's
coordinate. (Training-time constraint handling lives in the loss weights;
see the pipeline module.)

The loaded checkpoint is immutable shared state; every request derives its
own RNG (from the request seed if given, fresh entropy otherwise), so the
threaded server stays deterministic per request and safe under
concurrency. Static assets (the explorer UI) are served from an optional
directory at the root path.
"""

from __future__ import annotations

import json
import mimetypes
from dataclasses import replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .cfengine import GenerationConfig, generate_from_encoded
from .checkpoint import TrainedBundle
from .encoding import CATEGORICAL, rows_to_table
from .errors import FlowcfError

API_PREFIX = "/api/v1"
MAX_M = 1000
CONT_CHANGE_TOL = 1e-9


class RequestError(FlowcfError):
    code = "bad_request"


def schema_descriptor(bundle: TrainedBundle) -> dict:
    """Feature descriptors driving the dynamic form: levels for categorical
    columns, value scale for continuous ones, plus constraint flags."""
    schema = bundle.schema
    features = []
    for name in schema.features:
        desc = {
            "name": name,
            "kind": schema.kinds[name],
            "weight": schema.weight_of(name),
            "immutable": name in schema.immutable,
            "monotonic": name in schema.monotonic,
        }
        j = schema.features.index(name)
        if schema.kinds[name] == CATEGORICAL and bundle.encoder_kind == "te":
            lt = bundle.encoder.columns[name]
            desc["levels"] = sorted(lt.means)
        elif schema.kinds[name] == CATEGORICAL:
            desc["levels"] = list(bundle.encoder.levels[name])
        else:
            desc["mean"] = float(bundle.encoder.mean[j]) if bundle.encoder_kind == "te" else None
            desc["std"] = float(bundle.encoder.std[j]) if bundle.encoder_kind == "te" else None
        features.append(desc)
    return {
        "target": schema.target,
        "positive_label": schema.positive_label,
        "features": features,
    }


def _parse_features(bundle: TrainedBundle, body: dict) -> np.ndarray:
    features = body.get("features")
    if not isinstance(features, dict):
        raise RequestError("body must carry a 'features' object")
    try:
        table = rows_to_table([features], bundle.schema)
        return bundle.encoder.transform(table)
    except FlowcfError as e:
        raise RequestError(str(e)) from e


def _feature_indices(bundle: TrainedBundle, names, what: str) -> list[int]:
    out = []
    for name in names:
        if name not in bundle.schema.features:
            raise RequestError(f"{what} lists unknown feature '{name}'")
        out.append(bundle.schema.features.index(name))
    return out


def score_request(bundle: TrainedBundle, body: dict) -> dict:
    x = _parse_features(bundle, body)
    return {"probability": float(bundle.classifier.predict(x)[0])}


def counterfactual_request(bundle: TrainedBundle, body: dict) -> dict:
    if bundle.encoder_kind != "te":
        raise RequestError("counterfactual decoding requires a target-encoded checkpoint")
    x = _parse_features(bundle, body)

    m = body.get("m", 10)
    temperature = body.get("temperature", 1.0)
    if not isinstance(m, int) or not 1 <= m <= MAX_M:
        raise RequestError(f"'m' must be an integer in [1, {MAX_M}]")
    if not isinstance(temperature, (int, float)) or temperature < 0:
        raise RequestError("'temperature' must be a number >= 0")
    seed = body.get("seed")
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (2 ** 62))
    elif not isinstance(seed, int):
        raise RequestError("'seed' must be an integer")

    weights = None
    if body.get("weights") is not None:
        wmap = body["weights"]
        if not isinstance(wmap, dict):
            raise RequestError("'weights' must map feature names to positive numbers")
        _feature_indices(bundle, wmap, "weights")
        weights = np.ones(len(bundle.schema.features))
        for name, w in wmap.items():
            if not isinstance(w, (int, float)) or w <= 0:
                raise RequestError(f"weight for '{name}' must be > 0")
            weights[bundle.schema.features.index(name)] = float(w)

    constraints = body.get("constraints") or {}
    if not isinstance(constraints, dict):
        raise RequestError("'constraints' must be an object")
    freeze_idx = _feature_indices(bundle, constraints.get("freeze", []), "freeze")
    mono_idx = _feature_indices(bundle, constraints.get("monotone_up", []), "monotone_up")

    config = GenerationConfig(m=m, temperature=float(temperature), seed=seed)
    (cf_set,) = generate_from_encoded(bundle.flow, bundle.classifier, x, config)
    cf = cf_set.cfs_encoded
    if freeze_idx:
        cf[:, freeze_idx] = x[0, freeze_idx]
    if mono_idx:
        cf[:, mono_idx] = np.maximum(cf[:, mono_idx], x[0, mono_idx])
    if freeze_idx or mono_idx:  # rescore after projection
        cf_set = replace(cf_set, cfs_encoded=cf,
                         probs=bundle.classifier.predict(cf),
                         log_probs=bundle.flow.log_prob(cf))

    decoded = bundle.encoder.inverse(cf_set.cfs_encoded).rows()
    input_decoded = bundle.encoder.inverse(x).rows()[0]
    w_row = np.ones(x.shape[1]) if weights is None else weights

    entries = []
    for j in range(m):
        row = decoded[j]
        changed = []
        for name in bundle.schema.features:
            if bundle.schema.kinds[name] == CATEGORICAL:
                if row[name] != input_decoded[name]:
                    changed.append(name)
            else:
                a, b = row[name], input_decoded[name]
                if abs(a - b) > CONT_CHANGE_TOL * max(1.0, abs(b)):
                    changed.append(name)
        dist = float(np.linalg.norm(w_row * (cf_set.cfs_encoded[j] - x[0])))
        entries.append({
            "features": row,
            "probability": float(cf_set.probs[j]),
            "log_likelihood": float(cf_set.log_probs[j]),
            "weighted_distance": dist,
            "changed_features": changed,
        })
    entries.sort(key=lambda e: -e["log_likelihood"])
    return {
        "input_probability": cf_set.input_prob,
        "seed": seed,
        "cfs": entries,
    }


class ApiHandler(BaseHTTPRequestHandler):
    server_version = "flowcf/0.1"

    @property
    def bundle(self) -> TrainedBundle:
        return self.server.bundle  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # quiet by default
        if getattr(self.server, "verbose", False):
            super().log_message(fmt, *args)

    def _reply(self, status: int, payload: dict) -> None:
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _error(self, status: int, code: str, message: str) -> None:
        self._reply(status, {"error": {"code": code, "message": message}})

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            body = json.loads(raw or "{}")
        except json.JSONDecodeError:
            raise RequestError("body is not valid JSON")
        if not isinstance(body, dict):
            raise RequestError("body must be a JSON object")
        return body

    def do_GET(self):
        if self.path == "/healthz":
            return self._reply(200, {"status": "ok"})
        if self.path == f"{API_PREFIX}/schema":
            return self._reply(200, schema_descriptor(self.bundle))
        return self._serve_static()

    def do_POST(self):
        handlers = {
            f"{API_PREFIX}/score": score_request,
            f"{API_PREFIX}/counterfactuals": counterfactual_request,
        }
        handler = handlers.get(self.path)
        if handler is None:
            return self._error(404, "not_found", f"unknown endpoint {self.path}")
        try:
            body = self._read_body()
            return self._reply(200, handler(self.bundle, body))
        except FlowcfError as e:
            return self._error(400, e.code, str(e))

    def _serve_static(self):
        static_dir = getattr(self.server, "static_dir", None)
        if static_dir is None:
            return self._error(404, "not_found", f"unknown path {self.path}")
        rel = self.path.lstrip("/") or "index.html"
        target = (Path(static_dir) / rel).resolve()
        if not str(target).startswith(str(Path(static_dir).resolve())) or not target.is_file():
            return self._error(404, "not_found", f"unknown path {self.path}")
        data = target.read_bytes()
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


def make_server(bundle: TrainedBundle, host: str = "127.0.0.1", port: int = 8080,
                static_dir=None, verbose: bool = False) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), ApiHandler)
    server.bundle = bundle  # type: ignore[attr-defined]
    server.static_dir = static_dir  # type: ignore[attr-defined]
    server.verbose = verbose  # type: ignore[attr-defined]
    return server


def serve(bundle: TrainedBundle, bind: str = "127.0.0.1:8080", static_dir=None) -> None:
    host, _, port = bind.rpartition(":")
    server = make_server(bundle, host or "127.0.0.1", int(port), static_dir,
                         verbose=True)
    try:
        server.serve_forever()
    finally:
        server.server_close()
