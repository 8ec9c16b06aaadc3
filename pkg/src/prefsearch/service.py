"""HTTP API over the session store.

Endpoints (all bodies UTF-8 JSON, errors as {"error": {code, message}}):

    POST   /kbs                      KB document -> {kb_id}
    GET    /kbs/{id}/facets?constraints=<expr;expr>
    POST   /sessions                 {kb_id} -> {session_id, greeting}
    POST   /sessions/{id}/turns      {text, confidence?} -> turn result
    GET    /sessions/{id}/state
    DELETE /sessions/{id}            -> 204
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .errors import (ConflictError, KBValidationError, NotFoundError,
                     PrefSearchError)
from .session import SessionStore, _act_doc


class SessionBody(BaseModel):
    kb_id: str


class TurnBody(BaseModel):
    text: str
    confidence: Optional[float] = None


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"code": code, "message": message}})


def create_app(store: SessionStore, ui_dir: Optional[str] = None) -> FastAPI:
    """API app; with ui_dir set, the browser client is served at /ui."""
    app = FastAPI(title="prefsearch", version="0.1.0")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    if ui_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    @app.exception_handler(PrefSearchError)
    async def handle_domain_error(request: Request, exc: PrefSearchError):
        if isinstance(exc, NotFoundError):
            return _error(404, "not_found", str(exc))
        if isinstance(exc, ConflictError):
            return _error(409, "conflict", str(exc))
        if isinstance(exc, KBValidationError):
            return _error(400, "invalid_kb",
                          "; ".join(f.message for f in exc.findings))
        return _error(400, "bad_request", str(exc))

    @app.post("/kbs")
    def post_kb(document: dict) -> dict:
        kb_id = store.add_kb(document)
        return {"kb_id": kb_id}

    @app.get("/kbs/{kb_id}/facets")
    def get_facets(kb_id: str, constraints: str = "") -> dict:
        return store.facet_counts(kb_id, constraints)

    @app.post("/sessions")
    def post_session(body: SessionBody) -> dict:
        session = store.create_session(body.kb_id)
        return {"session_id": session.id,
                "greeting": session.events[0]["system_text"]}

    @app.post("/sessions/{session_id}/turns")
    def post_turn(session_id: str, body: TurnBody) -> dict:
        confidence = 1.0 if body.confidence is None else body.confidence
        result = store.post_turn(session_id, body.text, confidence)
        return {"system_text": result.system_text,
                "system_act": _act_doc(result.system_act),
                "delta": result.delta}

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str) -> dict:
        return store.get_state(session_id)

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str) -> Response:
        store.delete_session(session_id)
        return Response(status_code=204)

    return app
