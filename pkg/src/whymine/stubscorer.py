"""Deterministic stub scorer speaking the NDJSON wire protocol.

Scores are hash-derived constants: stable across runs and platforms, with
no model behind them.  Used for end-to-end pipeline tests and dry runs;
the real model service implements the same protocol.
"""

from __future__ import annotations

import hashlib
import json
import socketserver
import threading

import numpy as np

from .scoring import BLANK

EMBED_DIM = 8
MODEL_ID = "stub-hash-v1"


def _hash_unit(text: str) -> float:
    """Deterministic value in [0, 1) from the text."""
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return int(digest[:12], 16) / 16 ** 12


def stub_embed(text: str) -> list[float]:
    digest = hashlib.sha256(b"embed\x1f" + text.encode("utf-8")).digest()
    raw = np.frombuffer(digest[:EMBED_DIM * 4], dtype=np.uint32).astype(float)
    centered = raw - raw.mean() if raw.std() > 0 else raw + 1.0
    vec = centered / np.linalg.norm(centered)
    return [float(x) for x in vec]


def stub_nli(premise: str, hypothesis: str) -> float:
    return _hash_unit(f"nli\x1f{premise}\x1f{hypothesis}")


def stub_fitb(prompt: str, candidate: str, visual_features=None) -> float:
    key = f"fitb\x1f{prompt}\x1f{candidate}"
    if visual_features:
        key += "\x1f" + json.dumps(visual_features)
    return -1.0 - _hash_unit(key)  # a length-normalized log-likelihood stand-in


def handle_request(payload: dict) -> dict:
    req_id = payload.get("id")
    kind = payload.get("kind")
    try:
        if kind == "embed":
            texts = payload["texts"]
            if not texts:
                raise ValueError("embed request has no texts")
            return {"id": req_id, "vectors": [stub_embed(t) for t in texts]}
        if kind == "nli":
            premise = payload["premise"]
            hypotheses = payload["hypotheses"]
            if not hypotheses:
                raise ValueError("nli request has no hypotheses")
            return {"id": req_id,
                    "scores": [stub_nli(premise, h) for h in hypotheses]}
        if kind == "fitb":
            prompt = payload["prompt"]
            candidates = payload["candidates"]
            if prompt.count(BLANK) != 1:
                raise ValueError(f"prompt must contain exactly one {BLANK!r} blank")
            if not candidates:
                raise ValueError("fitb request has no candidates")
            vf = payload.get("visual_features")
            if vf:
                dim = payload.get("visual_dim")
                if dim is not None and any(len(row) != dim for row in vf):
                    raise ValueError("visual feature rows do not match visual_dim")
            return {"id": req_id,
                    "scores": [stub_fitb(prompt, c, vf) for c in candidates]}
        if kind == "health":
            return {"id": req_id, "models": {"all": MODEL_ID},
                    "embed_dim": EMBED_DIM, "visual_dim": None}
        raise ValueError(f"unknown request kind: {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        return {"id": req_id, "error": str(exc)}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            line = raw.strip()
            if not line:
                continue
            try:
                payload = json.loads(line.decode("utf-8"))
                response = handle_request(payload)
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                response = {"id": None, "error": f"malformed request: {exc}"}
            self.wfile.write(json.dumps(response).encode("utf-8") + b"\n")
            self.wfile.flush()


class StubScorerServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="Run the deterministic stub scorer.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=7180)
    args = parser.parse_args(argv)
    server = StubScorerServer(args.host, args.port)
    print(f"stub scorer listening on {server.endpoint}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
