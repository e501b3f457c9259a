"""HTTP front door: session endpoints, the event/notification stream, and the CLI.

Endpoints (JSON over HTTP):

  POST   /sessions                    create a session
  POST   /sessions/{id}/events        ingest one event or a batch (fallback path)
  PUT    /sessions/{id}/document      replace the document or apply a patch
  PUT    /sessions/{id}/threshold     adjust the idle threshold
  DELETE /sessions/{id}               end the session, returns its metrics report
  WS     /sessions/{id}/stream        full-duplex: events up, notifications/patches down
  POST   /debug/advance               virtual-clock mode only: move time forward

Stream messages up: {"type":"event", "at", "kind", "chars_delta"}; every event
is acknowledged with {"type":"ack", "received_at"}. Messages down:
{"type":"notification", ...} and {"type":"patch", ...}. A dropped stream
synthesizes a hidden-page event after a 10 s grace gap; reconnecting
synthesizes the page becoming visible again.
"""

from __future__ import annotations

import argparse
import asyncio
import logging
import os
import threading
from pathlib import Path

import uvicorn
from fastapi import Body, FastAPI, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .clock import VirtualClock, WallClock
from .core import (
    Condition,
    DocKind,
    MalformedDocument,
    MalformedEvent,
    NonPositiveDuration,
    OutOfOrderEvent,
    UnknownSession,
)
from .dispatcher import FileMailSink, SmtpMailSink
from .generation import EncouragementSet, HttpBackend, MockBackend
from .service import SessionService
from .wire import config_from_dict, event_from_dict

logger = logging.getLogger(__name__)

_BAD_REQUEST = (NonPositiveDuration, MalformedDocument, MalformedEvent, ValueError)


def create_app(service: SessionService, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="stallcue", version="0.1.0")
    app.state.service = service
    # the editor may be served from another origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    if ui_dir is not None:
        app.mount("/app", StaticFiles(directory=ui_dir, html=True), name="ui")

    @app.exception_handler(UnknownSession)
    async def _unknown(request, exc):
        return JSONResponse(status_code=404, content={"error": "unknown_session"})

    @app.exception_handler(OutOfOrderEvent)
    async def _out_of_order(request, exc):
        return JSONResponse(
            status_code=409, content={"error": "out_of_order_event", "detail": str(exc)}
        )

    for exc_type in _BAD_REQUEST:

        @app.exception_handler(exc_type)
        async def _bad(request, exc):
            return JSONResponse(
                status_code=400, content={"error": "bad_request", "detail": str(exc)}
            )

    @app.post("/sessions")
    async def create_session(payload: dict = Body(default={})):
        cfg = config_from_dict(payload.get("config", {}))
        doc_kind = DocKind(payload.get("doc_kind", "text"))
        recipient = payload.get("recipient")
        sid = service.create_session(cfg, doc_kind=doc_kind, recipient=recipient)
        return {"session_id": sid}

    @app.post("/sessions/{session_id}/events")
    async def ingest(session_id: str, payload: dict | list = Body(...)):
        events = payload if isinstance(payload, list) else [payload]
        acks = []
        for obj in events:
            ev = event_from_dict({**obj, "session_id": session_id})
            acks.append(service.ingest_event(session_id, ev))
        return acks[0] if not isinstance(payload, list) else {"acks": acks}

    @app.put("/sessions/{session_id}/document")
    async def update_document(session_id: str, payload: dict = Body(...)):
        return service.update_document(session_id, payload)

    @app.put("/sessions/{session_id}/threshold")
    async def set_threshold(session_id: str, payload: dict = Body(...)):
        return service.set_threshold(session_id, float(payload["idle_threshold_t"]))

    @app.delete("/sessions/{session_id}")
    async def end_session(session_id: str):
        return service.end_session(session_id).to_dict()

    if isinstance(service.clock, VirtualClock):

        @app.post("/debug/advance")
        async def debug_advance(payload: dict = Body(...)):
            service.advance(int(payload["ms"]))
            return {"now_ms": service.clock.now_ms}

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(ws: WebSocket, session_id: str):
        await ws.accept()
        loop = asyncio.get_running_loop()
        outbox: asyncio.Queue = asyncio.Queue()

        def push(msg: dict) -> None:
            loop.call_soon_threadsafe(outbox.put_nowait, msg)

        try:
            service.stream_opened(session_id)
        except UnknownSession:
            await ws.close(code=4404)
            return
        service.subscribe(session_id, push)

        async def pump() -> None:
            while True:
                await ws.send_json(await outbox.get())

        pump_task = asyncio.create_task(pump())
        try:
            while True:
                data = await ws.receive_json()
                msg_type = data.get("type")
                if msg_type == "event":
                    try:
                        ev = event_from_dict({**data, "session_id": session_id})
                        ack = service.ingest_event(session_id, ev)
                    except OutOfOrderEvent as exc:
                        push({"type": "error", "error": "out_of_order_event", "detail": str(exc)})
                        continue
                    except _BAD_REQUEST as exc:
                        push({"type": "error", "error": "bad_request", "detail": str(exc)})
                        continue
                    push({"type": "ack", "received_at": ack["received_at"]})
                elif msg_type == "ping":
                    push({"type": "pong"})
        except (WebSocketDisconnect, UnknownSession):
            pass
        finally:
            pump_task.cancel()
            service.unsubscribe(session_id, push)
            service.stream_closed(session_id)

    return app


def _build_service(args: argparse.Namespace) -> SessionService:
    clock = VirtualClock() if args.virtual_clock else WallClock()
    if args.backend == "mock":
        backend = MockBackend(seed=args.mock_seed)
        background = False
    else:
        endpoint = args.gen_endpoint or os.environ.get("STALLCUE_GEN_ENDPOINT")
        if not endpoint:
            raise SystemExit("remote backend needs --gen-endpoint or STALLCUE_GEN_ENDPOINT")
        key_var = os.environ.get("STALLCUE_GEN_KEY_VAR", "STALLCUE_GEN_API_KEY")
        backend = HttpBackend(
            endpoint,
            api_key=os.environ.get(key_var),
            max_tokens=int(os.environ.get("STALLCUE_GEN_MAX_TOKENS", "256")),
            temperature=float(os.environ.get("STALLCUE_GEN_TEMPERATURE", "0.9")),
        )
        background = not args.virtual_clock

    mail_sink = None
    if args.mail_dir:
        mail_sink = FileMailSink(args.mail_dir)
    elif os.environ.get("STALLCUE_SMTP_HOST"):
        mail_sink = SmtpMailSink(
            host=os.environ["STALLCUE_SMTP_HOST"],
            port=int(os.environ.get("STALLCUE_SMTP_PORT", "25")),
            username=os.environ.get("STALLCUE_SMTP_USER"),
            password=os.environ.get("STALLCUE_SMTP_PASSWORD"),
            from_addr=os.environ.get("STALLCUE_SMTP_FROM", "stallcue@localhost"),
        )

    encouragements = None
    if args.encouragements:
        import json

        data = json.loads(Path(args.encouragements).read_text(encoding="utf-8"))
        encouragements = tuple(data["messages"])
        EncouragementSet(encouragements)  # validate early: exactly six

    return SessionService(
        args.data_dir,
        clock=clock,
        backend=backend,
        encouragements=encouragements,
        mail_sink=mail_sink,
        background_generation=background,
    )


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(prog="stallcue-server")
    parser.add_argument("--listen", default="127.0.0.1:8787", help="host:port to bind")
    parser.add_argument("--data-dir", default="./stallcue-data")
    parser.add_argument("--backend", choices=("mock", "remote"), default="mock")
    parser.add_argument("--mock-seed", type=int, default=7)
    parser.add_argument("--gen-endpoint", default=None)
    parser.add_argument("--tick-ms", type=int, default=1000)
    parser.add_argument(
        "--virtual-clock",
        action="store_true",
        help="testing mode: time moves only via POST /debug/advance",
    )
    parser.add_argument("--mail-dir", default=None, help="file mail sink directory")
    parser.add_argument("--encouragements", default=None, help="JSON file with six messages")
    parser.add_argument("--ui-dir", default=None, help="serve a built editor UI at /app")
    args = parser.parse_args(argv)

    service = _build_service(args)
    app = create_app(service, ui_dir=args.ui_dir)

    stop = threading.Event()
    if not args.virtual_clock:

        def drive() -> None:
            while not stop.wait(args.tick_ms / 1000.0):
                try:
                    service.tick()
                except Exception:
                    logger.exception("tick failed")

        threading.Thread(target=drive, name="stallcue-tick", daemon=True).start()

    host, _, port = args.listen.rpartition(":")
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    finally:
        stop.set()


if __name__ == "__main__":
    main()
