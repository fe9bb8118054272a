"""Study backend: session protocol, event store, HTTP app."""

from .app import create_app
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

__all__ = [
    "EmptyVideoSet",
    "EventStore",
    "OffGridScore",
    "OutOfOrder",
    "Presentation",
    "SessionNotRating",
    "SessionState",
    "UnknownAnnotator",
    "build_playlist",
    "create_app",
]
