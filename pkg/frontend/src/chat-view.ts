/** Chat tab: transcript with citation chips, a retry banner for failed sends,
 * and a source-preview panel backed by keyword search. */

import { ApiClient, ApiError, Citation } from "./api";
import { ChatStore } from "./state";

export class ChatView {
  private readonly transcript: HTMLOListElement;
  private readonly banner: HTMLDivElement;
  private readonly bannerText: HTMLSpanElement;
  private readonly retryButton: HTMLButtonElement;
  private readonly preview: HTMLElement;
  private readonly previewTitle: HTMLHeadingElement;
  private readonly previewMeta: HTMLParagraphElement;
  private readonly previewContent: HTMLPreElement;
  private readonly form: HTMLFormElement;
  private readonly input: HTMLInputElement;
  private readonly sendButton: HTMLButtonElement;

  constructor(
    root: HTMLElement,
    private readonly store: ChatStore,
    private readonly api: ApiClient,
  ) {
    root.innerHTML = `
      <section class="chat">
        <ol class="transcript"></ol>
        <div class="error-banner" hidden>
          <span class="error-text"></span>
          <button type="button" class="retry">Retry</button>
        </div>
        <aside class="source-preview" hidden>
          <header>
            <h3 class="preview-title"></h3>
            <button type="button" class="close-preview" aria-label="Close">&times;</button>
          </header>
          <p class="preview-meta"></p>
          <pre class="preview-content"></pre>
        </aside>
        <form class="composer">
          <input class="chat-input" type="text" autocomplete="off"
                 placeholder="Ask about the indexed stories and personas" />
          <button type="submit" class="send" disabled>Send</button>
        </form>
      </section>
    `;
    this.transcript = root.querySelector(".transcript") as HTMLOListElement;
    this.banner = root.querySelector(".error-banner") as HTMLDivElement;
    this.bannerText = root.querySelector(".error-text") as HTMLSpanElement;
    this.retryButton = root.querySelector(".retry") as HTMLButtonElement;
    this.preview = root.querySelector(".source-preview") as HTMLElement;
    this.previewTitle = root.querySelector(".preview-title") as HTMLHeadingElement;
    this.previewMeta = root.querySelector(".preview-meta") as HTMLParagraphElement;
    this.previewContent = root.querySelector(".preview-content") as HTMLPreElement;
    this.form = root.querySelector(".composer") as HTMLFormElement;
    this.input = root.querySelector(".chat-input") as HTMLInputElement;
    this.sendButton = root.querySelector(".send") as HTMLButtonElement;

    this.form.addEventListener("submit", (event) => {
      event.preventDefault();
      this.submit();
    });
    this.input.addEventListener("input", () => this.syncSendButton());
    this.retryButton.addEventListener("click", () => void this.store.retry());
    const closePreview = root.querySelector(".close-preview") as HTMLButtonElement;
    closePreview.addEventListener("click", () => {
      this.preview.hidden = true;
    });

    this.store.subscribe(() => this.render());
    this.render();
  }

  private submit(): void {
    const state = this.store.getState();
    const text = this.input.value;
    if (!text.trim() || state.pending) return;
    this.input.value = "";
    void this.store.sendMessage(text);
  }

  private render(): void {
    const state = this.store.getState();
    this.transcript.replaceChildren(
      ...state.messages.map((message) => {
        const item = document.createElement("li");
        item.className = `bubble ${message.role}`;
        const text = document.createElement("p");
        text.textContent = message.text;
        item.append(text);
        if (message.citations.length > 0) {
          const chips = document.createElement("div");
          chips.className = "citations";
          for (const citation of message.citations) {
            chips.append(this.citationChip(citation));
          }
          item.append(chips);
        }
        return item;
      }),
    );
    this.banner.hidden = state.error === null;
    this.bannerText.textContent = state.error === null ? "" : state.error.message;
    this.syncSendButton();
  }

  private citationChip(citation: Citation): HTMLButtonElement {
    const chip = document.createElement("button");
    chip.type = "button";
    chip.className = "citation-chip";
    chip.dataset.docId = citation.doc_id;
    chip.textContent = citation.title;
    chip.addEventListener("click", () => void this.openPreview(citation));
    return chip;
  }

  private syncSendButton(): void {
    this.sendButton.disabled = this.store.getState().pending || !this.input.value.trim();
  }

  /** Look the cited document up by title so the panel can show its body. */
  private async openPreview(citation: Citation): Promise<void> {
    this.preview.hidden = false;
    this.previewTitle.textContent = citation.title;
    this.previewMeta.textContent = citation.doc_id;
    this.previewContent.textContent = "Loading…";
    try {
      const response = await this.api.search(citation.title, "keyword", 10);
      const hit = response.hits.find((candidate) => candidate.doc_id === citation.doc_id);
      this.previewContent.textContent = hit ? hit.content : "Source text unavailable.";
    } catch (cause) {
      const message = cause instanceof ApiError ? cause.message : String(cause);
      this.previewContent.textContent = `Could not load source: ${message}`;
    }
  }
}
