"""Stateless HTTP reward scoring: POST /score, GET /healthz."""
from __future__ import annotations

import logging
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.concurrency import run_in_threadpool

from . import __version__
from .data import instance_from_record
from .errors import JudgeUnavailable, MissingComponent
from .grpo import group_advantages
from .judge import Judge
from .parsing import format_for
from .rewards import score_group

log = logging.getLogger(__name__)

ENGINE_VERSION = f"strew-{__version__}"


class BadRequest(ValueError):
    pass


def parse_score_request(body) -> dict:
    if not isinstance(body, dict):
        raise BadRequest("request body must be a JSON object")
    unknown = set(body) - {"task", "candidates", "normalize", "requires_think"}
    if unknown:
        raise BadRequest(f"unknown fields {sorted(unknown)}")
    if "task" not in body or "candidates" not in body:
        raise BadRequest("request needs task and candidates")
    try:
        task = instance_from_record(body["task"])
    except (ValueError, TypeError, KeyError) as exc:
        raise BadRequest(f"invalid task: {exc}") from exc
    cands = body["candidates"]
    if not isinstance(cands, list) or not cands or not all(isinstance(c, str) for c in cands):
        raise BadRequest("candidates must be a non-empty list of strings")
    normalize = body.get("normalize", False)
    think = body.get("requires_think", True)
    if not isinstance(normalize, bool) or not isinstance(think, bool):
        raise BadRequest("normalize and requires_think must be booleans")
    if normalize and len(cands) < 2:
        raise BadRequest("normalize needs at least two candidates")
    return {"task": task, "candidates": cands, "normalize": normalize, "requires_think": think}


def handle_score(body, judge: Optional[Judge] = None, epsilon_sigma: float = 1e-8) -> dict:
    req = parse_score_request(body)
    spec = format_for(req["task"].kind, req["requires_think"])
    breakdowns = score_group(req["task"], req["candidates"], judge, spec)
    advantages = None
    if req["normalize"]:
        advantages = group_advantages([b.total for b in breakdowns], epsilon_sigma).advantages
    return {
        "breakdowns": [b.to_dict() for b in breakdowns],
        "advantages": advantages,
        "engine_version": ENGINE_VERSION,
    }


def create_app(judge: Optional[Judge] = None, epsilon_sigma: float = 1e-8) -> FastAPI:
    app = FastAPI(title="strew reward service", version=__version__)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "engine_version": ENGINE_VERSION}

    @app.post("/score")
    async def score(request: Request):
        try:
            body = await request.json()
        except ValueError:
            return JSONResponse({"error": "body is not valid JSON"}, status_code=400)
        try:
            # judge calls block; keep them off the event loop
            return JSONResponse(await run_in_threadpool(handle_score, body, judge, epsilon_sigma))
        except BadRequest as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        except MissingComponent as exc:
            return JSONResponse({"error": str(exc)}, status_code=422)
        except JudgeUnavailable as exc:
            log.warning("judge unavailable: %s", exc)
            return JSONResponse({"error": str(exc)}, status_code=502)

    return app
