/** Single-page shell: chat and persona tabs over one shared API client.
 *
 * The service base URL defaults to same-origin and can be overridden with the
 * ``?api=`` query parameter, e.g. ``?api=http://127.0.0.1:8000``.
 */

import { ApiClient } from "./api";
import { ChatView } from "./chat-view";
import { PersonaView } from "./persona-view";
import { ChatStore } from "./state";

export function mount(root: HTMLElement, api: ApiClient): void {
  root.innerHTML = `
    <header class="app-header">
      <h1>persona-rag</h1>
      <nav class="tabs">
        <button type="button" class="tab active" data-tab="chat">Chat</button>
        <button type="button" class="tab" data-tab="personas">Personas</button>
      </nav>
    </header>
    <main>
      <div class="tab-panel" data-panel="chat"></div>
      <div class="tab-panel" data-panel="personas" hidden></div>
    </main>
  `;
  const chatPanel = root.querySelector('[data-panel="chat"]') as HTMLElement;
  const personaPanel = root.querySelector('[data-panel="personas"]') as HTMLElement;
  new ChatView(chatPanel, new ChatStore(api), api);
  const personaView = new PersonaView(personaPanel, api);
  let personasLoaded = false;

  for (const tab of root.querySelectorAll<HTMLButtonElement>(".tab")) {
    tab.addEventListener("click", () => {
      for (const other of root.querySelectorAll<HTMLButtonElement>(".tab")) {
        other.classList.toggle("active", other === tab);
      }
      const active = tab.dataset.tab;
      chatPanel.hidden = active !== "chat";
      personaPanel.hidden = active !== "personas";
      if (active === "personas" && !personasLoaded) {
        personasLoaded = true;
        void personaView.load();
      }
    });
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const baseUrl = new URLSearchParams(window.location.search).get("api") ?? "";
  mount(document.getElementById("app") as HTMLElement, new ApiClient(baseUrl));
}
