"""Newline-delimited JSON TCP server for the scorer wire protocol.

Request kinds: ``embed`` (texts -> vectors), ``nli`` (premise +
hypotheses -> entailment probabilities), ``fitb`` (cloze prompt +
candidates, optional visual features -> length-normalized
log-likelihoods), ``health`` (model identifiers and dimensions).
Responses echo the request id; failures come back as ``error`` fields,
never as dropped connections.
"""

from __future__ import annotations

import argparse
import json
import socketserver
import threading

from . import __version__
from .backends import BLANK, BackendError, DeterministicBackend, TransformersBackend
from .config import ServiceConfig, load_config


def make_backend(config: ServiceConfig):
    if config.backend == "transformers":
        return TransformersBackend(config)
    return DeterministicBackend(config)


class RequestHandlerCore:
    """Protocol logic, independent of the transport.  A single lock
    serializes access to the model instance; request isolation is the
    caller's concern (one response per request line, errors included)."""

    def __init__(self, config: ServiceConfig, backend=None):
        self.config = config
        self.backend = backend if backend is not None else make_backend(config)
        self._inference_lock = threading.Lock()

    def _truncate(self, text: str) -> tuple[str, bool]:
        limit = self.config.max_text_chars
        return (text[:limit], True) if len(text) > limit else (text, False)

    def handle(self, payload: dict) -> dict:
        req_id = payload.get("id")
        kind = payload.get("kind")
        try:
            if kind == "embed":
                texts = payload["texts"]
                if not texts:
                    raise ValueError("embed request has no texts")
                truncated = [self._truncate(t) for t in texts]
                with self._inference_lock:
                    vectors = self.backend.embed([t for t, _ in truncated])
                response = {"id": req_id, "vectors": vectors}
                if any(flag for _, flag in truncated):
                    response["warning"] = (
                        f"inputs truncated to {self.config.max_text_chars} characters")
                return response
            if kind == "nli":
                premise = payload["premise"]
                hypotheses = payload["hypotheses"]
                if not hypotheses:
                    raise ValueError("nli request has no hypotheses")
                premise, flag = self._truncate(premise)
                with self._inference_lock:
                    scores = self.backend.nli(premise, hypotheses)
                response = {"id": req_id, "scores": scores}
                if flag:
                    response["warning"] = (
                        f"premise truncated to {self.config.max_text_chars} characters")
                return response
            if kind == "fitb":
                prompt = payload["prompt"]
                candidates = payload["candidates"]
                if prompt.count(BLANK) != 1:
                    raise ValueError(f"prompt must contain exactly one {BLANK!r} blank")
                if not candidates:
                    raise ValueError("fitb request has no candidates")
                features = payload.get("visual_features")
                if features:
                    declared = payload.get("visual_dim")
                    if declared is not None and any(len(row) != declared for row in features):
                        raise ValueError("visual feature rows do not match visual_dim")
                with self._inference_lock:
                    scores = self.backend.fitb(prompt, candidates, features)
                return {"id": req_id, "scores": scores}
            if kind == "health":
                return {
                    "id": req_id,
                    "models": self.backend.model_ids,
                    "embed_dim": self.config.embed_dim,
                    "visual_dim": self.config.visual_dim,
                    "version": __version__,
                }
            raise ValueError(f"unknown request kind: {kind!r}")
        except (KeyError, TypeError, ValueError, BackendError) as exc:
            return {"id": req_id, "error": str(exc)}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        core: RequestHandlerCore = self.server.core
        for raw in self.rfile:
            line = raw.strip()
            if not line:
                continue
            try:
                payload = json.loads(line.decode("utf-8"))
                response = core.handle(payload)
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                response = {"id": None, "error": f"malformed request: {exc}"}
            self.wfile.write(json.dumps(response).encode("utf-8") + b"\n")
            self.wfile.flush()


class ScorerService(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, config: ServiceConfig, backend=None):
        super().__init__((config.host, config.port), _Handler)
        self.core = RequestHandlerCore(config, backend)

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n", 1)[0])
    parser.add_argument("--config", default=None, help="flat key=value config file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", default=[])
    parser.add_argument("--host", default=None)
    parser.add_argument("--port", type=int, default=None)
    parser.add_argument("--checkpoint", default=None,
                        help="fill-in-the-blank checkpoint to load")
    args = parser.parse_args(argv)

    overrides = {}
    for item in args.set:
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    config = load_config(args.config, overrides)
    if args.host is not None:
        config = config.with_overrides(host=args.host)
    if args.port is not None:
        config = config.with_overrides(port=args.port)

    service = ScorerService(config)
    if args.checkpoint:
        service.core.backend.load_checkpoint(args.checkpoint)
    print(f"scorer service ({config.backend}) listening on {service.endpoint}",
          flush=True)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
