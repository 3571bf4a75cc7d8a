/** Persona tab: read-only list of indexed personas with a labeled detail view.
 *
 * The service has no listing endpoint, so the browser issues a keyword search
 * over attribute-name tokens that every persona document contains, then keeps
 * only hits whose category is "persona".
 */

import { ApiClient, ApiError, SearchHit } from "./api";
import { PERSONA_ATTRIBUTES, PERSONA_LIST_QUERY, parsePersona } from "./persona";

export class PersonaView {
  private readonly list: HTMLUListElement;
  private readonly detail: HTMLElement;
  private readonly status: HTMLParagraphElement;

  constructor(
    root: HTMLElement,
    private readonly api: ApiClient,
  ) {
    root.innerHTML = `
      <section class="personas">
        <div class="persona-pane">
          <p class="persona-status">Loading personas…</p>
          <ul class="persona-list"></ul>
        </div>
        <article class="persona-detail" hidden></article>
      </section>
    `;
    this.list = root.querySelector(".persona-list") as HTMLUListElement;
    this.detail = root.querySelector(".persona-detail") as HTMLElement;
    this.status = root.querySelector(".persona-status") as HTMLParagraphElement;
  }

  async load(): Promise<void> {
    this.status.hidden = false;
    this.status.textContent = "Loading personas…";
    this.list.replaceChildren();
    this.detail.hidden = true;
    let personas: SearchHit[];
    try {
      const response = await this.api.search(PERSONA_LIST_QUERY, "keyword", 50);
      personas = response.hits.filter((hit) => hit.category === "persona");
    } catch (cause) {
      const message = cause instanceof ApiError ? cause.message : String(cause);
      this.status.textContent = `Could not reach the service: ${message}`;
      return;
    }
    if (personas.length === 0) {
      this.status.textContent = "No personas indexed yet.";
      return;
    }
    personas.sort((a, b) => a.title.localeCompare(b.title));
    this.status.hidden = true;
    this.list.replaceChildren(...personas.map((hit) => this.row(hit)));
  }

  private row(hit: SearchHit): HTMLLIElement {
    const item = document.createElement("li");
    const button = document.createElement("button");
    button.type = "button";
    button.className = "persona-row";
    button.dataset.docId = hit.doc_id;
    button.textContent = hit.title;
    button.addEventListener("click", () => this.showDetail(hit));
    item.append(button);
    return item;
  }

  /** Nine labeled sections in stored attribute order; absent values show as
   * "unknown" rather than dropping the section. */
  private showDetail(hit: SearchHit): void {
    const attributes = parsePersona(hit.content);
    const heading = document.createElement("h3");
    heading.textContent = hit.title;
    const sections = PERSONA_ATTRIBUTES.map(({ key, label }) => {
      const section = document.createElement("section");
      section.className = "attribute";
      section.dataset.key = key;
      const term = document.createElement("h4");
      term.textContent = label;
      const value = document.createElement("p");
      value.textContent = attributes.get(key) ?? "unknown";
      section.append(term, value);
      return section;
    });
    this.detail.replaceChildren(heading, ...sections);
    this.detail.hidden = false;
  }
}
