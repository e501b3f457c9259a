// Entrypoint: read options from the query string, create a session against
// the service, and mount the editor.
//
//   ?base=http://127.0.0.1:8787   service origin (default: page origin)
//   ?mode=text|slides             editor flavor (default text)
//   ?condition=proposed|control|none
//   ?t=45                         initial idle threshold in seconds
//   ?recipient=me@example.org     away-email recipient

import { EditorView } from "./editor.js";
import { browserNotifier } from "./notify.js";
import { SessionClient } from "./transport.js";

export async function bootstrap(root: HTMLElement, search: string): Promise<EditorView> {
  const params = new URLSearchParams(search);
  const mode = params.get("mode") === "slides" ? "slides" : "text";
  const client = new SessionClient({
    baseUrl: params.get("base") ?? window.location.origin,
    docKind: mode === "slides" ? "slide_deck" : "text",
    config: {
      condition: (params.get("condition") as "proposed" | "control" | "none") ?? "proposed",
      idle_threshold_t: params.has("t") ? Number(params.get("t")) : undefined,
    },
    recipient: params.get("recipient") ?? undefined,
  });
  await client.createSession();

  const editor = new EditorView({
    root,
    client,
    systemNotifier: browserNotifier(),
    mode,
  });
  editor.mount();
  await editor.notifier.init();
  client.connect();
  return editor;
}

declare global {
  interface Window {
    __stallcueAutoBoot?: boolean;
  }
}

if (typeof window !== "undefined" && window.__stallcueAutoBoot !== false) {
  const root = document.getElementById("app");
  if (root) {
    bootstrap(root, window.location.search).catch((err) => {
      console.error("failed to start editor", err);
      root.textContent = `failed to start editor: ${err}`;
    });
  }
}
