/** Shared fetch stubbing for headless DOM tests. */

import { ChatResponse, FetchLike, SearchHit, SearchResponse } from "../src/api";

export interface RecordedCall {
  url: string;
  init?: RequestInit;
}

type Handler = (url: string, init?: RequestInit) => Promise<Response>;

export function jsonResponse(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

/** Queue-based fetch replacement that records every request it serves. */
export class FetchStub {
  calls: RecordedCall[] = [];
  private queue: Handler[] = [];
  private fallback: Handler | null = null;

  fetch: FetchLike = (url, init) => {
    this.calls.push({ url, init });
    const handler = this.queue.shift() ?? this.fallback;
    if (handler === null || handler === undefined) {
      return Promise.reject(new Error(`unexpected request: ${url}`));
    }
    return handler(url, init);
  };

  enqueue(handler: Handler): void {
    this.queue.push(handler);
  }

  enqueueJson(payload: unknown, status = 200): void {
    this.enqueue(() => Promise.resolve(jsonResponse(payload, status)));
  }

  enqueueFailure(error: Error): void {
    this.enqueue(() => Promise.reject(error));
  }

  respondWith(handler: Handler): void {
    this.fallback = handler;
  }

  bodyOf(index: number): string {
    const call = this.calls[index];
    if (call === undefined) throw new Error(`no call at index ${index}`);
    return String(call.init?.body ?? "");
  }
}

export interface Deferred<T> {
  promise: Promise<T>;
  resolve: (value: T) => void;
  reject: (error: unknown) => void;
}

export function deferred<T>(): Deferred<T> {
  let resolve!: (value: T) => void;
  let reject!: (error: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

/** Let queued microtasks and zero-delay timers run. */
export async function flush(): Promise<void> {
  for (let i = 0; i < 4; i += 1) await Promise.resolve();
  await new Promise((resolve) => setTimeout(resolve, 0));
}

export function chatReply(overrides: Partial<ChatResponse> = {}): ChatResponse {
  return {
    schema_version: 1,
    session_id: "s-1",
    answer: "Granite Quarry Co runs a mixed fleet of 14 machines. [1]",
    citations: [{ doc_id: "persona:granite-quarry", title: "Persona: Granite Quarry Co" }],
    ...overrides,
  };
}

export function searchReply(hits: SearchHit[], overrides: Partial<SearchResponse> = {}): SearchResponse {
  return {
    schema_version: 1,
    query: "q",
    mode: "keyword",
    k: 20,
    hits,
    ...overrides,
  };
}

export function searchHit(overrides: Partial<SearchHit> = {}): SearchHit {
  return {
    doc_id: "story:granite-hollow",
    title: "Granite Hollow Aggregates",
    category: "success_story",
    score: 3.21,
    rank: 1,
    content: "Granite Hollow Aggregates cut idle time by a third after the telemetry rollout.",
    ...overrides,
  };
}

export function errorEnvelope(code: string, message: string): unknown {
  return { schema_version: 1, error: { code, message } };
}
