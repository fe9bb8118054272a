/**
 * Thin DOM layer: build the static skeleton once, then project the machine
 * state onto it. All behavior lives in machine.ts; this file only wires
 * events to transitions and mirrors state into elements.
 */

import { Channel, MachineState, canSubmit, restRemaining } from "./machine.js";
import { GridScore, SCORE_GRID } from "./schemas.js";
import { OA_CRITERIA, SCORE_LABELS, TRAINING_NOTICE, TS_CRITERIA, keyToScore } from "./grid.js";

export interface Handlers {
  onScore(channel: Channel, value: GridScore): void;
  onReplay(): void;
  onSubmit(): void;
}

interface Elements {
  video: HTMLVideoElement;
  trainingNote: HTMLElement;
  notice: HTMLElement;
  progress: HTMLElement;
  oaRow: HTMLElement;
  tsRow: HTMLElement;
  replay: HTMLButtonElement;
  submit: HTMLButtonElement;
  ratingPane: HTMLElement;
  restPane: HTMLElement;
  restClock: HTMLElement;
  finalPane: HTMLElement;
  finalText: HTMLElement;
}

function el(tag: string, className: string, text = ""): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text) node.textContent = text;
  return node;
}

function scoreRow(
  channel: Channel,
  criteria: string,
  onScore: Handlers["onScore"],
): { row: HTMLElement; buttons: Map<GridScore, HTMLButtonElement> } {
  const row = el("section", `score-row score-row-${channel}`);
  row.appendChild(el("p", "criteria", criteria));
  const strip = el("div", "buttons");
  const buttons = new Map<GridScore, HTMLButtonElement>();
  // fixed buttons are the whole input surface: there is no way to type a
  // score, so nothing off the grid can ever be entered
  for (const value of SCORE_GRID) {
    const b = document.createElement("button");
    b.type = "button";
    b.className = "score";
    const label = SCORE_LABELS[value];
    b.textContent = label ? `${value} ${label}` : String(value);
    b.addEventListener("click", () => onScore(channel, value));
    buttons.set(value, b);
    strip.appendChild(b);
  }
  row.appendChild(strip);
  return { row, buttons };
}

export class View {
  private readonly els: Elements;
  private readonly oaButtons: Map<GridScore, HTMLButtonElement>;
  private readonly tsButtons: Map<GridScore, HTMLButtonElement>;
  private shownVideo: string | null = null;

  constructor(root: HTMLElement, private readonly handlers: Handlers) {
    root.textContent = "";
    const rating = el("main", "pane pane-rating");
    const video = document.createElement("video");
    video.autoplay = true;
    video.muted = true;
    video.playsInline = true;
    rating.appendChild(video);

    const trainingNote = el("p", "training-note", TRAINING_NOTICE);
    rating.appendChild(trainingNote);

    const oa = scoreRow("oa", OA_CRITERIA, handlers.onScore);
    const ts = scoreRow("ts", TS_CRITERIA, handlers.onScore);
    rating.appendChild(oa.row);
    rating.appendChild(ts.row);

    const controls = el("div", "controls");
    const replay = document.createElement("button");
    replay.type = "button";
    replay.className = "replay";
    replay.textContent = "Replay (R)";
    replay.addEventListener("click", () => handlers.onReplay());
    const submit = document.createElement("button");
    submit.type = "button";
    submit.className = "submit";
    submit.textContent = "Submit rating";
    submit.addEventListener("click", () => handlers.onSubmit());
    controls.appendChild(replay);
    controls.appendChild(submit);
    rating.appendChild(controls);

    const notice = el("p", "notice");
    rating.appendChild(notice);
    const progress = el("p", "progress");
    rating.appendChild(progress);

    const rest = el("main", "pane pane-rest");
    rest.appendChild(el("h1", "", "Break time"));
    const restClock = el("p", "rest-clock");
    rest.appendChild(restClock);
    rest.appendChild(el("p", "", "Rating resumes when the timer runs out."));

    const final = el("main", "pane pane-final");
    const finalText = el("h1", "");
    final.appendChild(finalText);

    root.appendChild(rating);
    root.appendChild(rest);
    root.appendChild(final);

    this.els = {
      video,
      trainingNote,
      notice,
      progress,
      oaRow: oa.row,
      tsRow: ts.row,
      replay,
      submit,
      ratingPane: rating,
      restPane: rest,
      restClock,
      finalPane: final,
      finalText,
    };
    this.oaButtons = oa.buttons;
    this.tsButtons = ts.buttons;

    document.addEventListener("keydown", (ev) => this.onKey(ev));
  }

  private onKey(ev: KeyboardEvent): void {
    if (ev.key === "r" || ev.key === "R") {
      this.handlers.onReplay();
      return;
    }
    const value = keyToScore(ev.key, ev.shiftKey);
    if (value !== null) {
      // digits fill the overall score first, then temporal stability
      const channel: Channel = this.pendingChannel;
      this.handlers.onScore(channel, value);
    }
  }

  private pendingChannel: Channel = "oa";

  render(state: MachineState, videoUrl: (streamUrl: string) => string, serverNow: number): void {
    const { els } = this;
    const active = state.phase === "training" || state.phase === "rating";
    els.ratingPane.style.display = active ? "" : "none";
    els.restPane.style.display = state.phase === "resting" ? "" : "none";
    const terminal = state.phase === "done" || state.phase === "blocked";
    els.finalPane.style.display = terminal ? "" : "none";

    if (state.phase === "blocked") {
      els.finalText.textContent =
        "Session ended: your screening ratings were too far from the references.";
    } else if (state.phase === "done") {
      els.finalText.textContent = "All clips rated. Thank you!";
    }

    if (state.phase === "resting") {
      els.restClock.textContent = `${Math.ceil(restRemaining(state, serverNow))} s`;
    }

    if (active && state.presentation) {
      const src = videoUrl(state.presentation.stream_url);
      if (this.shownVideo !== src) {
        this.shownVideo = src;
        els.video.src = src;
      }
      els.trainingNote.style.display = state.phase === "training" ? "" : "none";
      els.progress.textContent = `Clip ${state.cursor + 1} of ${state.total}`;
    }

    for (const [value, button] of this.oaButtons) {
      button.classList.toggle("selected", state.oa === value);
    }
    for (const [value, button] of this.tsButtons) {
      button.classList.toggle("selected", state.ts === value);
    }
    this.pendingChannel = state.oa === null ? "oa" : "ts";

    els.submit.disabled = !canSubmit(state);
    els.notice.textContent = state.notice ?? "";
    els.notice.style.display = state.notice ? "" : "none";
  }

  replayVideo(): void {
    this.els.video.currentTime = 0;
    void this.els.video.play();
  }
}
