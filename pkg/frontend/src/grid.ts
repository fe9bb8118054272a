/** Score grid helpers and the on-screen rating criteria. */

import { GridScore, SCORE_GRID, isGridScore } from "./schemas.js";

export { SCORE_GRID, isGridScore };
export type { GridScore };

/**
 * Keyboard entry: digits 1-5 select the whole-number score, shift adds
 * half a step. Shift+5 would leave the grid, so it selects nothing.
 */
export function keyToScore(key: string, shift: boolean): GridScore | null {
  if (!/^[1-5]$/.test(key)) return null;
  const value = Number(key) + (shift ? 0.5 : 0);
  return isGridScore(value) ? value : null;
}

export const SCORE_LABELS: Record<GridScore, string> = {
  1: "bad",
  1.5: "",
  2: "poor",
  2.5: "",
  3: "fair",
  3.5: "",
  4: "good",
  4.5: "",
  5: "excellent",
};

export const OA_CRITERIA =
  "Overall quality: judge the clip as a whole, including sharpness, " +
  "color, and rendering artifacts of any kind.";

export const TS_CRITERIA =
  "Temporal stability: judge only how steady the clip is over time. " +
  "Flicker, shimmer, or popping lower this score even when single " +
  "frames look clean.";

export const TRAINING_NOTICE =
  "Training clips: these first presentations calibrate your scoring " +
  "against reference ratings. Rate them carefully; large deviations end " +
  "the session.";
