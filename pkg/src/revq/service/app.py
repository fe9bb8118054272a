"""HTTP backend for the rating study.

Endpoints: POST /annotators, POST /sessions, GET /sessions/{id}/next,
POST /sessions/{id}/ratings, GET /videos/{id} (range-capable), GET /export,
GET /health. See docs/api.md for schemas. All state changes go through the
append-only event store; a restart replays it.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from ..dataset import RATINGS_COLUMNS, SESSIONS, ManifestEntry, load_manifest
from .sessions import (
    EmptyVideoSet,
    OffGridScore,
    OutOfOrder,
    Presentation,
    SessionNotRating,
    SessionState,
    UnknownAnnotator,
    build_playlist,
)
from .store import EventStore


class AnnotatorBody(BaseModel):
    annotator_id: str


class SessionBody(BaseModel):
    annotator_id: str
    kind: str
    seed: int | None = None


class RatingBody(BaseModel):
    presentation_id: str
    oa_score: float
    ts_score: float
    client_timestamp: float
    replay_count: int = 0


class UnknownResource(KeyError):
    pass


_ERROR_CODES = {
    UnknownAnnotator: 404,
    UnknownResource: 404,
    EmptyVideoSet: 409,
    SessionNotRating: 409,
    OutOfOrder: 409,
    OffGridScore: 422,
}


class StudyService:
    """All mutable state plus the event log behind the HTTP surface."""

    def __init__(self, entries: list[ManifestEntry], store: EventStore, seed: int,
                 clock: Callable[[], float], round_size: int, rest_seconds: float,
                 repeat_count: int, repeat_gap: int):
        self.entries = {e.video_id: e for e in entries}
        self.store = store
        self.seed = seed
        self.clock = clock
        self.round_size = round_size
        self.rest_seconds = rest_seconds
        self.repeat_count = repeat_count
        self.repeat_gap = repeat_gap
        self.lock = threading.RLock()

        self.golds = {e.video_id: (e.gold_oa, e.gold_ts) for e in entries if e.is_gold}
        self.annotators: set[str] = set()
        self.sessions: dict[str, SessionState] = {}
        self.rating_rows: list[dict] = []
        for event in store.replay():
            self._apply(event, replaying=True)

    def videos_of_kind(self, kind: str) -> tuple[list[str], list[str]]:
        vids = [e.video_id for e in self.entries.values()
                if e.display_class == kind and not e.is_gold]
        golds = [e.video_id for e in self.entries.values()
                 if e.display_class == kind and e.is_gold]
        return vids, golds

    # -- event application (shared by live calls and startup replay) --

    def _apply(self, event: dict, replaying: bool = False):
        kind = event["type"]
        if kind == "annotator":
            self.annotators.add(event["annotator_id"])
        elif kind == "session":
            playlist = [Presentation(p["presentation_id"], p["video_id"],
                                     p["source_id"], p["gold"])
                        for p in event["playlist"]]
            self.sessions[event["session_id"]] = SessionState(
                session_id=event["session_id"],
                annotator_id=event["annotator_id"],
                kind=event["kind"],
                seed=event["seed"],
                playlist=playlist,
                round_size=event["round_size"],
                rest_seconds=event["rest_seconds"],
            )
        elif kind == "rating":
            state = self.sessions[event["session_id"]]
            state.accept(event["presentation_id"], event["oa"], event["ts"],
                         self.golds, now=event["server_time"])
            self.rating_rows.append(event)
        else:
            raise ValueError(f"unknown event type {kind!r}")

    # -- operations --

    def register(self, annotator_id: str):
        with self.lock:
            if annotator_id not in self.annotators:
                event = {"type": "annotator", "annotator_id": annotator_id}
                self.store.append(event)
                self._apply(event)

    def create_session(self, annotator_id: str, kind: str, seed: int | None) -> SessionState:
        with self.lock:
            if annotator_id not in self.annotators:
                raise UnknownAnnotator(annotator_id)
            if kind not in SESSIONS:
                raise EmptyVideoSet(f"unknown session kind {kind!r}")
            vids, golds = self.videos_of_kind(kind)
            if not vids:
                raise EmptyVideoSet(f"no videos with display class {kind}")
            use_seed = self.seed if seed is None else seed
            playlist = build_playlist(vids, golds, use_seed,
                                      repeat_count=self.repeat_count,
                                      repeat_gap=self.repeat_gap)
            session_id = f"s{len(self.sessions):04d}"
            event = {
                "type": "session", "session_id": session_id,
                "annotator_id": annotator_id, "kind": kind, "seed": use_seed,
                "round_size": self.round_size, "rest_seconds": self.rest_seconds,
                "playlist": [{"presentation_id": p.presentation_id,
                              "video_id": p.video_id, "source_id": p.source_id,
                              "gold": p.gold} for p in playlist],
            }
            self.store.append(event)
            self._apply(event)
            return self.sessions[session_id]

    def session(self, session_id: str) -> SessionState:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise UnknownResource(f"no session {session_id}") from None

    def submit(self, session_id: str, body: RatingBody) -> dict:
        with self.lock:
            state = self.session(session_id)
            now = float(self.clock())
            # validate on a copy so a rejection leaves no trace
            probe = SessionState(state.session_id, state.annotator_id, state.kind,
                                 state.seed, state.playlist, state.round_size,
                                 state.rest_seconds, state.cursor,
                                 state.gold_failed, state.rest_until)
            pres = probe.accept(body.presentation_id, body.oa_score, body.ts_score,
                                self.golds, now)
            event = {
                "type": "rating", "session_id": session_id,
                "annotator_id": state.annotator_id, "kind": state.kind,
                "presentation_id": pres.presentation_id, "video_id": pres.video_id,
                "source_id": pres.source_id, "oa": body.oa_score, "ts": body.ts_score,
                "client_timestamp": body.client_timestamp,
                "replay_count": body.replay_count, "server_time": now,
            }
            self.store.append(event)
            self._apply(event)
            return {"accepted": True, "state": state.phase(now), "cursor": state.cursor}

    def next_payload(self, session_id: str) -> dict:
        with self.lock:
            state = self.session(session_id)
            now = float(self.clock())
            phase = state.phase(now)
            payload = {
                "state": phase,
                "blocked": state.gold_failed,
                "cursor": state.cursor,
                "total": len(state.playlist),
                "round": state.round_index(),
                "round_size": state.round_size,
            }
            if phase == "resting":
                payload["rest_until"] = state.rest_until
            if phase in ("training", "rating") and not state.gold_failed:
                pres = state.current()
                payload["presentation"] = {
                    "presentation_id": pres.presentation_id,
                    "video_id": pres.video_id,
                    "gold": pres.gold,
                    "stream_url": f"/videos/{pres.source_id}",
                }
            return payload

    def export_csv(self, kind: str | None) -> str:
        with self.lock:
            lines = [",".join(RATINGS_COLUMNS)]
            for row in self.rating_rows:
                if kind is not None and row["kind"] != kind:
                    continue
                lines.append(",".join([
                    row["annotator_id"], row["video_id"], repr(row["oa"]),
                    repr(row["ts"]), row["kind"], repr(row["client_timestamp"]),
                ]))
            return "\n".join(lines) + "\n"


def _range_response(path: Path, range_header: str | None) -> Response:
    data = path.read_bytes()
    headers = {"Accept-Ranges": "bytes"}
    if range_header:
        try:
            unit, _, spec = range_header.partition("=")
            lo_s, _, hi_s = spec.partition("-")
            if unit.strip() != "bytes":
                raise ValueError(range_header)
            lo = int(lo_s) if lo_s else 0
            hi = int(hi_s) if hi_s else len(data) - 1
        except ValueError:
            return Response(status_code=416, headers=headers)
        if lo >= len(data) or hi < lo:
            return Response(status_code=416, headers=headers)
        hi = min(hi, len(data) - 1)
        headers["Content-Range"] = f"bytes {lo}-{hi}/{len(data)}"
        return Response(content=data[lo:hi + 1], status_code=206, headers=headers,
                        media_type="application/octet-stream")
    return Response(content=data, headers=headers, media_type="application/octet-stream")


def create_app(manifest_path: str | Path | None = None,
               entries: list[ManifestEntry] | None = None,
               store_path: str | Path = "study.ndjson",
               seed: int = 0, clock: Callable[[], float] = time.time,
               round_size: int = 200, rest_seconds: float = 600.0,
               repeat_count: int = 5, repeat_gap: int = 50) -> FastAPI:
    if entries is None:
        if manifest_path is None:
            raise ValueError("need a manifest path or explicit entries")
        entries = load_manifest(manifest_path)
    service = StudyService(entries, EventStore(store_path), seed, clock,
                           round_size, rest_seconds, repeat_count, repeat_gap)
    app = FastAPI(title="revq annotation service")
    app.state.service = service

    for exc_type, code in _ERROR_CODES.items():
        def handler(request: Request, exc: Exception, code=code):
            detail = str(exc.args[0]) if exc.args else str(exc)
            return JSONResponse({"error": type(exc).__name__, "detail": detail},
                                status_code=code)
        app.add_exception_handler(exc_type, handler)

    @app.post("/annotators", status_code=201)
    def register(body: AnnotatorBody):
        service.register(body.annotator_id)
        return {"annotator_id": body.annotator_id}

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionBody):
        state = service.create_session(body.annotator_id, body.kind, body.seed)
        return {
            "session_id": state.session_id,
            "kind": state.kind,
            "state": state.phase(float(service.clock())),
            "playlist_length": len(state.playlist),
            "gold_count": state.gold_count,
            "round_size": state.round_size,
        }

    @app.get("/sessions/{session_id}/next")
    def next_presentation(session_id: str):
        return service.next_payload(session_id)

    @app.post("/sessions/{session_id}/ratings")
    def submit_rating(session_id: str, body: RatingBody):
        return service.submit(session_id, body)

    @app.get("/videos/{video_id}")
    def video_bytes(video_id: str, request: Request):
        entry = service.entries.get(video_id)
        if entry is None:
            raise UnknownResource(f"no video {video_id}")
        path = Path(entry.video_path)
        if not path.is_file():
            raise UnknownResource(f"video file missing for {video_id}")
        return _range_response(path, request.headers.get("range"))

    @app.get("/export")
    def export(kind: str | None = None):
        return PlainTextResponse(service.export_csv(kind), media_type="text/csv")

    @app.get("/health")
    def health():
        return {"status": "ok", "sessions": len(service.sessions),
                "ratings": len(service.rating_rows)}

    return app
