"""HTTP/SSE surface of the annotation gateway.

All timestamps in request and response bodies are integer milliseconds on
the session's virtual clock. New prompts can be consumed either by long-poll
(GET /api/prompts?since=) or as server-sent events (GET /api/prompts/stream).
A background task ticks the replay session while the app is alive.
"""

from __future__ import annotations

import asyncio
import contextlib
import json

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import StreamingResponse

from ..errors import InvalidConfigError, NotFoundError, ValidationError
from .session import ReplaySession


def create_app(session: ReplaySession, poll_timeout_s: float = 25.0,
               tick_interval_s: float = 0.05) -> FastAPI:
    async def ticker():
        while True:
            session.tick()
            await asyncio.sleep(tick_interval_s)

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        task = asyncio.create_task(ticker())
        try:
            yield
        finally:
            task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await task

    app = FastAPI(title="annotation gateway", lifespan=lifespan)
    app.state.session = session
    app.state.prompt_signal = asyncio.Event()

    def on_prompt(_row: dict) -> None:
        signal = app.state.prompt_signal
        app.state.prompt_signal = asyncio.Event()
        signal.set()

    session.on_prompt = on_prompt

    def prompt_rows(since: int) -> list[dict]:
        rows = []
        for row in session.store.prompts_since(since):
            full = dict(row)
            full["response"] = session.store.latest_response(row["id"])
            rows.append(full)
        return rows

    @app.get("/api/prompts")
    async def get_prompts(since: int = -1, timeout_ms: int | None = None):
        deadline = asyncio.get_event_loop().time() + (
            poll_timeout_s if timeout_ms is None else timeout_ms / 1000.0
        )
        while True:
            rows = prompt_rows(since)
            remaining = deadline - asyncio.get_event_loop().time()
            if rows or remaining <= 0:
                return {"prompts": rows, "now": session.clock.now()}
            signal = app.state.prompt_signal
            with contextlib.suppress(asyncio.TimeoutError):
                await asyncio.wait_for(signal.wait(), timeout=remaining)

    @app.get("/api/prompts/stream")
    async def stream_prompts(request: Request, since: int = -1):
        async def gen():
            cursor = since
            yield ": connected\n\n"
            while True:
                if await request.is_disconnected():
                    return
                rows = prompt_rows(cursor)
                for row in rows:
                    cursor = max(cursor, row["issued_at"])
                    yield f"id: {row['id']}\ndata: {json.dumps(row)}\n\n"
                signal = app.state.prompt_signal
                with contextlib.suppress(asyncio.TimeoutError):
                    await asyncio.wait_for(signal.wait(), timeout=1.0)

        return StreamingResponse(gen(), media_type="text/event-stream")

    @app.post("/api/prompts/{prompt_id}/response")
    async def post_response(prompt_id: str, record: dict):
        try:
            stored = session.store.ingest_response(prompt_id, record,
                                                   received_at=session.clock.now())
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"prompt_id": prompt_id, "stored": stored}

    @app.post("/api/interactions", status_code=201)
    async def add_interaction(body: dict):
        try:
            iid = session.store.add_interaction(
                start_ms=int(body["start_ms"]), end_ms=int(body["end_ms"]),
                mode=body.get("mode"), at=session.clock.now())
        except (KeyError, TypeError) as exc:
            raise HTTPException(status_code=422, detail=f"bad body: {exc}")
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"id": iid}

    @app.patch("/api/interactions/{iid}")
    async def edit_interaction(iid: str, body: dict):
        current = next((r for r in session.store.intervals() if r["id"] == iid), None)
        if current is None:
            raise HTTPException(status_code=404, detail=f"no interaction {iid!r}")
        try:
            row = session.store.edit_interaction(
                iid,
                start_ms=int(body.get("start_ms", current["start_ms"])),
                end_ms=int(body.get("end_ms", current["end_ms"])),
                at=session.clock.now())
        except (KeyError, TypeError) as exc:
            raise HTTPException(status_code=422, detail=f"bad body: {exc}")
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return row

    @app.get("/api/segments")
    async def get_segments(from_ms: int | None = Query(default=None, alias="from"),
                           to_ms: int | None = Query(default=None, alias="to")):
        return {"segments": session.store.intervals(from_ms, to_ms),
                "now": session.clock.now()}

    @app.get("/api/probes")
    async def get_probes(from_ms: int | None = Query(default=None, alias="from"),
                         to_ms: int | None = Query(default=None, alias="to")):
        return {"probes": session.probe_rows(from_ms, to_ms)}

    @app.post("/api/replay/control")
    async def replay_control(body: dict):
        command = body.get("command")
        try:
            state = session.control(
                command,
                speed=body.get("speed"),
                target_ms=body.get("target_ms"),
            )
        except (ValidationError, InvalidConfigError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return state

    @app.get("/api/replay/clock")
    async def replay_clock():
        return session.clock_state()

    return app
