/** Chat view state: transcript, in-flight guard, and a retryable error slot.
 *
 * The session id lives only in this store; reloading the page starts a fresh
 * conversation. At most one request may be in flight per session, and a failed
 * request can be retried with the exact bytes that were first sent.
 */

import { ApiClient, ApiError, Citation, ChatRequestBody } from "./api";

export type Role = "user" | "assistant";

export interface ChatMessage {
  role: Role;
  text: string;
  citations: Citation[];
}

export interface ChatError {
  message: string;
  /** Serialized request body of the failed POST, resent verbatim on retry. */
  requestBody: string;
}

export interface ChatViewState {
  sessionId: string | null;
  messages: ChatMessage[];
  pending: boolean;
  error: ChatError | null;
}

type Listener = () => void;

export class ChatStore {
  private state: ChatViewState = {
    sessionId: null,
    messages: [],
    pending: false,
    error: null,
  };
  private listeners = new Set<Listener>();

  constructor(private readonly api: ApiClient) {}

  getState(): Readonly<ChatViewState> {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  /** No-op when the input is blank or a request is already in flight. */
  async sendMessage(text: string): Promise<void> {
    const query = text.trim();
    if (!query || this.state.pending) return;
    const body: ChatRequestBody = { query };
    if (this.state.sessionId !== null) body.session_id = this.state.sessionId;
    const requestBody = JSON.stringify(body);
    this.update({
      messages: [...this.state.messages, { role: "user", text: query, citations: [] }],
      pending: true,
      error: null,
    });
    await this.post(requestBody);
  }

  /** Resend the failed request body unchanged; the session is left intact. */
  async retry(): Promise<void> {
    const error = this.state.error;
    if (error === null || this.state.pending) return;
    this.update({ pending: true, error: null });
    await this.post(error.requestBody);
  }

  private async post(requestBody: string): Promise<void> {
    try {
      const response = await this.api.postChatRaw(requestBody);
      this.update({
        sessionId: response.session_id,
        messages: [
          ...this.state.messages,
          { role: "assistant", text: response.answer, citations: response.citations },
        ],
        pending: false,
      });
    } catch (cause) {
      const message = cause instanceof ApiError ? cause.message : String(cause);
      this.update({ pending: false, error: { message, requestBody } });
    }
  }

  private update(patch: Partial<ChatViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener();
  }
}
