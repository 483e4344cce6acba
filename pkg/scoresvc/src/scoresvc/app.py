"""FastAPI application exposing the scoring wire contract.

POST /embed  {"texts": [...]}              -> {"vectors": [[...], ...], "dim": N}
POST /nli    {"premise": .., "hypothesis": ..} -> {"entailment": p}
GET  /healthz                              -> model ids

Errors: 400 for missing/empty fields, 413 for oversize batches.
Responses depend only on the request body and static config.
"""

from __future__ import annotations

from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .models import load_embedder, load_nli

DEFAULT_EMBED_MODEL = "sentence-transformers/all-mpnet-base-v2"
DEFAULT_NLI_MODEL = "microsoft/deberta-large-mnli"


@dataclass(frozen=True)
class ServiceConfig:
    embed_model_id: str = DEFAULT_EMBED_MODEL
    nli_model_id: str = DEFAULT_NLI_MODEL
    port: int = 8090
    max_batch: int = 64

    def __post_init__(self):
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port out of range: {self.port}")
        if self.max_batch < 1:
            raise ValueError(f"max_batch must be >= 1, got {self.max_batch}")


def _bad_request(detail: str) -> JSONResponse:
    return JSONResponse(status_code=400, content={"error": detail})


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="scoresvc")
    # weights load once at startup; handlers only read them
    embedder = load_embedder(config.embed_model_id)
    nli = load_nli(config.nli_model_id)

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "embed_model_id": config.embed_model_id,
            "nli_model_id": config.nli_model_id,
            "max_batch": config.max_batch,
        }

    @app.post("/embed")
    async def embed(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _bad_request("request body must be JSON")
        texts = body.get("texts") if isinstance(body, dict) else None
        if not isinstance(texts, list) or not texts:
            return _bad_request("'texts' must be a non-empty list of strings")
        if len(texts) > config.max_batch:
            return JSONResponse(
                status_code=413,
                content={"error": f"batch of {len(texts)} exceeds max_batch "
                                  f"{config.max_batch}"})
        if any(not isinstance(t, str) or not t.strip() for t in texts):
            return _bad_request("every text must be a non-empty string")
        vectors = embedder.encode(texts)
        return {"vectors": vectors.tolist(), "dim": int(vectors.shape[1])}

    @app.post("/nli")
    async def nli_route(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _bad_request("request body must be JSON")
        if not isinstance(body, dict):
            return _bad_request("request body must be a JSON object")
        premise = body.get("premise")
        hypothesis = body.get("hypothesis")
        if not isinstance(premise, str) or not premise.strip():
            return _bad_request("'premise' must be a non-empty string")
        if not isinstance(hypothesis, str) or not hypothesis.strip():
            return _bad_request("'hypothesis' must be a non-empty string")
        score = nli.score(premise, hypothesis)
        return {"entailment": max(0.0, min(1.0, float(score)))}

    return app
