/**
 * Runtime mirrors of the annotation service's JSON contract (docs/api.md).
 *
 * Every request the client sends is parsed against its schema before it
 * goes on the wire, and every response is parsed before the app sees it,
 * so a contract drift fails loudly at the boundary instead of deep in the
 * UI.
 */

import { z } from "zod";

/** The only legal score values: half steps from 1 to 5. */
export const SCORE_GRID = [1, 1.5, 2, 2.5, 3, 3.5, 4, 4.5, 5] as const;

export type GridScore = (typeof SCORE_GRID)[number];

export function isGridScore(value: number): value is GridScore {
  return (SCORE_GRID as readonly number[]).includes(value);
}

const gridScore = z
  .number()
  .refine(isGridScore, { message: "score must lie on the half-step grid in [1, 5]" });

export const sessionKind = z.enum(["s720p", "s1080p", "s2k"]);
export type SessionKind = z.infer<typeof sessionKind>;

export const sessionPhase = z.enum(["training", "rating", "resting", "done"]);
export type SessionPhase = z.infer<typeof sessionPhase>;

// ---------------------------------------------------------------- requests

export const registerRequest = z
  .object({ annotator_id: z.string().min(1) })
  .strict();

export const sessionRequest = z
  .object({
    annotator_id: z.string().min(1),
    kind: sessionKind,
    seed: z.number().int().optional(),
  })
  .strict();

export const ratingRequest = z
  .object({
    presentation_id: z.string().min(1),
    oa_score: gridScore,
    ts_score: gridScore,
    client_timestamp: z.number(),
    replay_count: z.number().int().nonnegative(),
  })
  .strict();

export type RatingRequest = z.infer<typeof ratingRequest>;

// --------------------------------------------------------------- responses

export const registerResponse = z.object({ annotator_id: z.string() });

export type RegisterResponse = z.infer<typeof registerResponse>;

export const sessionResponse = z.object({
  session_id: z.string(),
  kind: sessionKind,
  state: sessionPhase,
  playlist_length: z.number().int().positive(),
  gold_count: z.number().int().nonnegative(),
  round_size: z.number().int().positive(),
});

export type SessionResponse = z.infer<typeof sessionResponse>;

export const presentation = z.object({
  presentation_id: z.string(),
  video_id: z.string(),
  gold: z.boolean(),
  stream_url: z.string(),
});

export type Presentation = z.infer<typeof presentation>;

export const nextResponse = z.object({
  state: sessionPhase,
  blocked: z.boolean(),
  cursor: z.number().int().nonnegative(),
  total: z.number().int().positive(),
  round: z.number().int().nonnegative(),
  round_size: z.number().int().positive(),
  rest_until: z.number().optional(),
  presentation: presentation.optional(),
});

export type NextResponse = z.infer<typeof nextResponse>;

export const ratingResponse = z.object({
  accepted: z.literal(true),
  state: sessionPhase,
  cursor: z.number().int().nonnegative(),
});

export type RatingResponse = z.infer<typeof ratingResponse>;

export const errorResponse = z.object({
  error: z.enum([
    "UnknownAnnotator",
    "UnknownResource",
    "EmptyVideoSet",
    "SessionNotRating",
    "OutOfOrder",
    "OffGridScore",
  ]),
  detail: z.string(),
});

export type ErrorResponse = z.infer<typeof errorResponse>;
