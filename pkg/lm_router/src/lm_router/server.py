"""HTTP serving of a trained router artifact.

Implements the wire protocol the completion pipeline's external router
speaks: POST /route and POST /route_batch. Decoding is greedy and the
model never samples, so identical requests always get identical replies.
Inference is serialized behind a lock; batch requests keep positional
order.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .modeling import greedy_generate, load_artifact
from .protocol import ROUTE_BATCH_PATH, ROUTE_PATH


class RouteRequest(BaseModel):
    prompt: str


class RouteBatchRequest(BaseModel):
    prompts: list[str]


def create_app(artifact_dir: str | Path) -> FastAPI:
    model, tokenizer, meta = load_artifact(artifact_dir)
    lock = threading.Lock()
    app = FastAPI(title="lm-router", version=str(meta.get("seed", "")))

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "malformed request body"})

    @app.exception_handler(Exception)
    async def inference_failure(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"error": f"inference failure: {exc}"})

    def generate(prompts: list[str]) -> list[str]:
        with lock:
            return greedy_generate(model, tokenizer, prompts)

    @app.post(ROUTE_PATH)
    def route(body: RouteRequest) -> dict:
        return {"output": generate([body.prompt])[0]}

    @app.post(ROUTE_BATCH_PATH)
    def route_batch(body: RouteBatchRequest) -> dict:
        return {"outputs": generate(body.prompts)}

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "artifact": str(artifact_dir)}

    return app


def serve(artifact_dir: str | Path, port: int, host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(create_app(artifact_dir), host=host, port=port, log_level="warning")
