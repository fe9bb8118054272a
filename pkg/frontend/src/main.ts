/**
 * Boot glue: resolve the annotator, keep exactly one session per browser
 * tab, and pump machine transitions from API responses. The server decides
 * phase changes (rest, blocking, completion); this loop only re-polls.
 */

import { ApiClient, ApiError } from "./api.js";
import {
  MachineState,
  applyAccept,
  applyNext,
  applyReject,
  applySession,
  beginSubmit,
  buildRating,
  canSubmit,
  initialState,
  recordReplay,
  restRemaining,
  selectScore,
} from "./machine.js";
import { View } from "./dom.js";
import { SessionKind } from "./schemas.js";

const ANNOTATOR_KEY = "revq.annotator";
const SESSION_KEY = "revq.session";
const REST_POLL_S = 5;

function serverNow(): number {
  // no clock sync: the countdown is cosmetic, the server gates the phase
  return Date.now() / 1000;
}

async function annotatorId(api: ApiClient): Promise<string> {
  const cached = localStorage.getItem(ANNOTATOR_KEY);
  if (cached) return cached;
  const name = window.prompt("Annotator id:")?.trim();
  if (!name) throw new Error("an annotator id is required");
  const res = await api.register(name);
  localStorage.setItem(ANNOTATOR_KEY, res.annotator_id);
  return res.annotator_id;
}

export async function boot(root: HTMLElement, api: ApiClient, kind: SessionKind): Promise<void> {
  let state: MachineState = initialState();
  let sessionId = "";
  let restTimer: number | null = null;

  const view = new View(root, {
    onScore(channel, value) {
      state = selectScore(state, channel, value);
      draw();
    },
    onReplay() {
      if (state.presentation) {
        state = recordReplay(state);
        view.replayVideo();
        draw();
      }
    },
    onSubmit() {
      void submit();
    },
  });

  function draw(): void {
    view.render(state, (u) => api.videoUrl(u), serverNow());
  }

  async function pump(): Promise<void> {
    const body = await api.next(sessionId);
    state = applyNext(state, body);
    draw();
    if (state.phase === "resting") {
      if (restTimer !== null) window.clearTimeout(restTimer);
      const waitS = Math.max(1, Math.min(restRemaining(state, serverNow()) + 1, REST_POLL_S));
      restTimer = window.setTimeout(() => void pump(), waitS * 1000);
    }
  }

  async function submit(): Promise<void> {
    if (!canSubmit(state)) return;
    const rating = buildRating(state, serverNow());
    state = beginSubmit(state);
    draw();
    try {
      const res = await api.submitRating(sessionId, rating);
      state = applyAccept(state, res);
      await pump();
    } catch (err) {
      if (err instanceof ApiError) {
        state = applyReject(state, err.detail);
        draw();
        if (err.code === "SessionNotRating") await pump();
      } else {
        throw err;
      }
    }
  }

  const annotator = await annotatorId(api);
  const stored = sessionStorage.getItem(SESSION_KEY);
  if (stored) {
    // one active session per tab: reattach instead of opening another
    sessionId = stored;
    state = { ...state, sessionId };
    try {
      await pump();
      window.setInterval(draw, 1000);
      return;
    } catch {
      sessionStorage.removeItem(SESSION_KEY);
      state = initialState();
    }
  }

  const session = await api.createSession(annotator, kind);
  sessionId = session.session_id;
  sessionStorage.setItem(SESSION_KEY, sessionId);
  state = applySession(state, session);
  await pump();
  window.setInterval(draw, 1000);
}

declare global {
  interface Window {
    revqBoot?: typeof boot;
  }
}

if (typeof window !== "undefined") {
  window.revqBoot = boot;
}
