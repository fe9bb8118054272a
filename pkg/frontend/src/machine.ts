/**
 * Pure session state machine. Every transition is a plain function from
 * state to state; the DOM layer renders the result and the API layer
 * feeds server payloads in. Nothing here touches the network or the
 * document, which is what makes the contract tests able to drive the
 * whole flow headlessly.
 */

import {
  GridScore,
  NextResponse,
  Presentation,
  RatingRequest,
  RatingResponse,
  SessionResponse,
  isGridScore,
} from "./schemas.js";

/** `blocked` is terminal; the server keeps answering but never advances. */
export type Phase = "boot" | "training" | "rating" | "resting" | "done" | "blocked";

export type Channel = "oa" | "ts";

export interface MachineState {
  phase: Phase;
  sessionId: string | null;
  cursor: number;
  total: number;
  goldCount: number;
  roundSize: number;
  presentation: Presentation | null;
  oa: GridScore | null;
  ts: GridScore | null;
  replayCount: number;
  restUntil: number | null;
  /** Inline notice (rejection detail, hints); never clears entered scores. */
  notice: string | null;
  submitting: boolean;
}

export function initialState(): MachineState {
  return {
    phase: "boot",
    sessionId: null,
    cursor: 0,
    total: 0,
    goldCount: 0,
    roundSize: 0,
    presentation: null,
    oa: null,
    ts: null,
    replayCount: 0,
    restUntil: null,
    notice: null,
    submitting: false,
  };
}

export function applySession(state: MachineState, body: SessionResponse): MachineState {
  return {
    ...state,
    sessionId: body.session_id,
    total: body.playlist_length,
    goldCount: body.gold_count,
    roundSize: body.round_size,
  };
}

export function applyNext(state: MachineState, body: NextResponse): MachineState {
  const phase: Phase = body.blocked ? "blocked" : body.state;
  const pres = body.presentation ?? null;
  const samePresentation =
    pres !== null && state.presentation?.presentation_id === pres.presentation_id;
  return {
    ...state,
    phase,
    cursor: body.cursor,
    total: body.total,
    restUntil: body.rest_until ?? null,
    presentation: pres,
    // a new clip starts with a clean slate; re-fetching the same one
    // (page reload, poll) keeps whatever was entered
    oa: samePresentation ? state.oa : null,
    ts: samePresentation ? state.ts : null,
    replayCount: samePresentation ? state.replayCount : 0,
    notice: samePresentation ? state.notice : null,
    submitting: false,
  };
}

/** Off-grid values cannot be selected; there is no path that stores one. */
export function selectScore(state: MachineState, channel: Channel, value: number): MachineState {
  if (state.phase !== "training" && state.phase !== "rating") return state;
  if (state.submitting || state.presentation === null) return state;
  if (!isGridScore(value)) return state;
  return { ...state, [channel]: value };
}

export function recordReplay(state: MachineState): MachineState {
  if (state.presentation === null) return state;
  return { ...state, replayCount: state.replayCount + 1 };
}

/** Both channels are required; the submit control stays disabled otherwise. */
export function canSubmit(state: MachineState): boolean {
  return (
    (state.phase === "training" || state.phase === "rating") &&
    state.presentation !== null &&
    state.oa !== null &&
    state.ts !== null &&
    !state.submitting
  );
}

export function buildRating(state: MachineState, clientTimestamp: number): RatingRequest {
  if (!canSubmit(state) || state.presentation === null) {
    throw new Error("submit attempted without both scores selected");
  }
  return {
    presentation_id: state.presentation.presentation_id,
    oa_score: state.oa as GridScore,
    ts_score: state.ts as GridScore,
    client_timestamp: clientTimestamp,
    replay_count: state.replayCount,
  };
}

export function beginSubmit(state: MachineState): MachineState {
  return { ...state, submitting: true, notice: null };
}

export function applyAccept(state: MachineState, body: RatingResponse): MachineState {
  // the presentation is consumed; the next payload brings the new one
  return {
    ...state,
    cursor: body.cursor,
    presentation: null,
    oa: null,
    ts: null,
    replayCount: 0,
    notice: null,
    submitting: false,
  };
}

/** Rejections surface inline and keep the entered scores untouched. */
export function applyReject(state: MachineState, detail: string): MachineState {
  return { ...state, notice: detail, submitting: false };
}

/** Seconds of rest left, by the server's clock; never negative. */
export function restRemaining(state: MachineState, serverNow: number): number {
  if (state.restUntil === null) return 0;
  return Math.max(0, state.restUntil - serverNow);
}
