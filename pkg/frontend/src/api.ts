/** Typed client for the persona-rag HTTP service. */

export interface Citation {
  doc_id: string;
  title: string;
}

export interface ChatResponse {
  schema_version: number;
  session_id: string;
  answer: string;
  citations: Citation[];
}

export interface ChatRequestBody {
  query: string;
  session_id?: string;
}

export interface SearchHit {
  doc_id: string;
  title: string;
  category: string;
  score: number;
  rank: number;
  content: string;
  keyword_rank?: number | null;
  vector_rank?: number | null;
}

export type SearchMode = "hybrid" | "keyword" | "vector";

export interface SearchResponse {
  schema_version: number;
  query: string;
  mode: SearchMode;
  k: number;
  hits: SearchHit[];
}

interface ErrorEnvelope {
  error?: { code?: string; message?: string };
}

/** Carries the HTTP status and the service's error code; status 0 means the
 * request never reached the service. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

const globalFetch: FetchLike = (url, init) => fetch(url, init);

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = globalFetch,
  ) {}

  /** POST /chat with a pre-serialized body, so a retry can resend the exact
   * same bytes that failed. */
  async postChatRaw(bodyText: string): Promise<ChatResponse> {
    const payload = await this.request("/chat", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: bodyText,
    });
    return payload as ChatResponse;
  }

  async postChat(body: ChatRequestBody): Promise<ChatResponse> {
    return this.postChatRaw(JSON.stringify(body));
  }

  async search(query: string, mode: SearchMode = "keyword", k = 20): Promise<SearchResponse> {
    const params = new URLSearchParams({ q: query, mode, k: String(k) });
    const payload = await this.request(`/search?${params.toString()}`, { method: "GET" });
    return payload as SearchResponse;
  }

  private async request(path: string, init: RequestInit): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (cause) {
      throw new ApiError(0, "network", `service unreachable: ${String(cause)}`);
    }
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      payload = null;
    }
    if (!response.ok) {
      const detail = (payload as ErrorEnvelope | null)?.error;
      throw new ApiError(
        response.status,
        detail?.code ?? "http_error",
        detail?.message ?? `request failed with status ${response.status}`,
      );
    }
    return payload;
  }
}
