"""HTTP surface: /generate, /embed, /health.

Clients depend on three error behaviors: 400 for an empty question,
empty context, empty text list, or a non-positive token budget; 413 when
the context exceeds the character limit; 503 while a backend is
unavailable. Everything else is a plain 200 with a JSON body.
"""

from __future__ import annotations

import os
import time

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .backends import load_embedder, load_generator

DEFAULT_MAX_CONTEXT_CHARS = 16_000

STUB_ENV = "CLARIFYD_STUB"
GEN_MODEL_ENV = "CLARIFYD_GEN_MODEL"
EMB_MODEL_ENV = "CLARIFYD_EMB_MODEL"
MAX_CHARS_ENV = "CLARIFYD_GEN_MAX_CHARS"


class GenerateRequest(BaseModel):
    question: str
    context: str
    max_new_tokens: int = 48


class GenerateResponse(BaseModel):
    answer: str
    model_tag: str
    latency_ms: int


class EmbedRequest(BaseModel):
    texts: list[str]


class EmbedResponse(BaseModel):
    vectors: list[list[float]]
    dim: int


def _env_flag(name: str, default: str) -> bool:
    return os.environ.get(name, default).strip() not in ("0", "false", "")


def create_app(
    *,
    stub: bool | None = None,
    gen_model: str | None = None,
    emb_model: str | None = None,
    max_context_chars: int | None = None,
) -> FastAPI:
    """Build the service; keyword overrides win over the environment."""
    if stub is None:
        stub = _env_flag(STUB_ENV, "1")
    if gen_model is None:
        gen_model = os.environ.get(GEN_MODEL_ENV, "")
    if emb_model is None:
        emb_model = os.environ.get(EMB_MODEL_ENV, "")
    if max_context_chars is None:
        max_context_chars = int(
            os.environ.get(MAX_CHARS_ENV, str(DEFAULT_MAX_CONTEXT_CHARS))
        )

    generator, gen_reason = load_generator(stub, gen_model)
    embedder, emb_reason = load_embedder(stub, emb_model)

    app = FastAPI(title="genservice")

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "stub": stub,
            "generator_ready": generator is not None,
            "embedder_ready": embedder is not None,
        }

    @app.post("/generate", response_model=GenerateResponse)
    def generate(request: GenerateRequest):
        if generator is None:
            raise HTTPException(status_code=503, detail=gen_reason)
        if not request.question.strip():
            raise HTTPException(status_code=400, detail="question must not be empty")
        if not request.context.strip():
            raise HTTPException(status_code=400, detail="context must not be empty")
        if request.max_new_tokens < 1:
            raise HTTPException(
                status_code=400, detail="max_new_tokens must be positive"
            )
        if len(request.context) > max_context_chars:
            raise HTTPException(
                status_code=413,
                detail=(
                    f"context of {len(request.context)} chars exceeds "
                    f"the {max_context_chars} char limit"
                ),
            )
        start = time.perf_counter()
        answer = generator.generate(
            request.question, request.context, request.max_new_tokens
        )
        elapsed_ms = int(round((time.perf_counter() - start) * 1000))
        return GenerateResponse(
            answer=answer, model_tag=generator.tag, latency_ms=elapsed_ms
        )

    @app.post("/embed", response_model=EmbedResponse)
    def embed(request: EmbedRequest):
        if embedder is None:
            raise HTTPException(status_code=503, detail=emb_reason)
        if not request.texts:
            raise HTTPException(status_code=400, detail="texts must not be empty")
        vectors = embedder.embed(request.texts)
        return EmbedResponse(vectors=vectors, dim=embedder.dim)

    return app
