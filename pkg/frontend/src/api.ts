/**
 * Typed HTTP client for the annotation service. Requests are validated
 * against the contract schemas before they leave the client, responses
 * before they reach the caller.
 */

import { z } from "zod";

import {
  NextResponse,
  RatingRequest,
  RatingResponse,
  RegisterResponse,
  SessionKind,
  SessionResponse,
  errorResponse,
  nextResponse,
  ratingRequest,
  ratingResponse,
  registerRequest,
  registerResponse,
  sessionRequest,
  sessionResponse,
} from "./schemas.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    readonly detail: string,
  ) {
    super(`${code}: ${detail}`);
    this.name = "ApiError";
  }
}

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(
    schema: z.ZodType<T>,
    method: "GET" | "POST",
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const res = await this.fetchImpl(this.base + path, init);
    const payload: unknown = await res.json();
    if (!res.ok) {
      const err = errorResponse.parse(payload);
      throw new ApiError(res.status, err.error, err.detail);
    }
    return schema.parse(payload);
  }

  async register(annotatorId: string): Promise<RegisterResponse> {
    const body = registerRequest.parse({ annotator_id: annotatorId });
    return this.request(registerResponse, "POST", "/annotators", body);
  }

  async createSession(
    annotatorId: string,
    kind: SessionKind,
    seed?: number,
  ): Promise<SessionResponse> {
    const body = sessionRequest.parse(
      seed === undefined
        ? { annotator_id: annotatorId, kind }
        : { annotator_id: annotatorId, kind, seed },
    );
    return this.request(sessionResponse, "POST", "/sessions", body);
  }

  async next(sessionId: string): Promise<NextResponse> {
    return this.request(nextResponse, "GET", `/sessions/${sessionId}/next`);
  }

  async submitRating(sessionId: string, rating: RatingRequest): Promise<RatingResponse> {
    const body = ratingRequest.parse(rating);
    return this.request(ratingResponse, "POST", `/sessions/${sessionId}/ratings`, body);
  }

  videoUrl(streamUrl: string): string {
    return this.base + streamUrl;
  }
}
