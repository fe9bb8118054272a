"""Session protocol for the rating study: playlists, phases, screening.

A session walks one ordered playlist. The screening videos (known reference
scores) form the head of the playlist and double as the training phase: every
annotator rates them first, and a rating outside the agreement tolerance
permanently blocks the session before the main set begins. Rounds of
presentations are separated by enforced rest periods.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import GOLD_TOLERANCE, SESSIONS, on_score_grid

ROUND_SIZE = 200
REST_SECONDS = 600.0
REPEAT_GAP = 50
REPEAT_SUFFIX = ".r"

STATE_TRAINING = "training"
STATE_RATING = "rating"
STATE_RESTING = "resting"
STATE_DONE = "done"


class UnknownAnnotator(KeyError):
    pass


class EmptyVideoSet(ValueError):
    pass


class OffGridScore(ValueError):
    pass


class OutOfOrder(ValueError):
    pass


class SessionNotRating(ValueError):
    pass


@dataclass(frozen=True)
class Presentation:
    presentation_id: str
    video_id: str       # id the rating is exported under (repeats get an alias)
    source_id: str      # underlying content id
    gold: bool


@dataclass
class SessionState:
    session_id: str
    annotator_id: str
    kind: str
    seed: int
    playlist: list[Presentation]
    round_size: int = ROUND_SIZE
    rest_seconds: float = REST_SECONDS
    cursor: int = 0
    gold_failed: bool = False
    rest_until: float | None = None

    def __post_init__(self):
        if self.kind not in SESSIONS:
            raise ValueError(f"unknown session kind {self.kind!r}")

    @property
    def gold_count(self) -> int:
        return sum(1 for p in self.playlist if p.gold)

    def phase(self, now: float) -> str:
        if self.gold_failed:
            return STATE_TRAINING  # blocked; never leaves training
        if self.cursor >= len(self.playlist):
            return STATE_DONE
        if self.rest_until is not None and now < self.rest_until:
            return STATE_RESTING
        if self.cursor < self.gold_count:
            return STATE_TRAINING
        return STATE_RATING

    def current(self) -> Presentation:
        return self.playlist[self.cursor]

    def round_index(self) -> int:
        return self.cursor // self.round_size

    def accept(self, presentation_id: str, oa: float, ts: float,
               golds: dict[str, tuple[float, float]], now: float) -> Presentation:
        """Validate one submission and advance; raises instead of recording."""
        phase = self.phase(now)
        if self.gold_failed:
            raise SessionNotRating("session blocked by screening failure")
        if phase == STATE_DONE:
            raise SessionNotRating("session is complete")
        if phase == STATE_RESTING:
            raise SessionNotRating(f"resting until {self.rest_until}")
        if not on_score_grid(oa) or not on_score_grid(ts):
            raise OffGridScore(f"scores ({oa}, {ts}) are off the half-step grid")
        pres = self.current()
        if presentation_id != pres.presentation_id:
            raise OutOfOrder(f"expected {pres.presentation_id}, got {presentation_id}")

        self.rest_until = None
        if pres.gold:
            ref_oa, ref_ts = golds[pres.source_id]
            if abs(oa - ref_oa) > GOLD_TOLERANCE or abs(ts - ref_ts) > GOLD_TOLERANCE:
                self.gold_failed = True
        self.cursor += 1
        if (not self.gold_failed and self.cursor < len(self.playlist)
                and self.cursor % self.round_size == 0):
            self.rest_until = now + self.rest_seconds
        return pres


def build_playlist(video_ids: list[str], gold_ids: list[str], seed: int,
                   repeat_count: int = 5, repeat_gap: int = REPEAT_GAP) -> list[Presentation]:
    """Screening head + seeded shuffle + spaced repeat presentations.

    Repeats are inserted at or after `repeat_gap` presentations past their
    first occurrence (appended when the playlist is too short for the gap),
    so existing pair distances never shrink.
    """
    if not video_ids:
        raise EmptyVideoSet("no videos for this session kind")
    if len(set(video_ids) | set(gold_ids)) != len(video_ids) + len(gold_ids):
        raise ValueError("video ids must be unique and disjoint from gold ids")
    rng = np.random.default_rng([seed, 11])
    order = [video_ids[i] for i in rng.permutation(len(video_ids))]
    gold_order = [gold_ids[i] for i in rng.permutation(len(gold_ids))] if gold_ids else []

    entries: list[tuple[str, str, bool]] = (
        [(g, g, True) for g in gold_order] + [(v, v, False) for v in order])

    # only videos early enough that a full gap fits can be repeated, unless
    # the whole set is shorter than the gap (then append at max distance)
    eligible = len(order) - repeat_gap + 1 if len(order) > repeat_gap else len(order)
    repeat_count = min(repeat_count, eligible)
    repeat_sources = [order[i] for i in sorted(rng.choice(eligible, size=repeat_count,
                                                          replace=False))]
    for src in repeat_sources:
        first = next(i for i, e in enumerate(entries) if e[0] == src)
        lo = first + repeat_gap
        if lo > len(entries):
            at = len(entries)
        else:
            at = int(rng.integers(lo, len(entries) + 1))
        entries.insert(at, (src + REPEAT_SUFFIX, src, False))

    return [Presentation(f"p{i:05d}", vid, src, gold)
            for i, (vid, src, gold) in enumerate(entries)]
