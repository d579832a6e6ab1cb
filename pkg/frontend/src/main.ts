// App wiring: store + views + status polling + the session's SSE stream.

import { ApiClient } from "./api.js";
import { SseConnection } from "./sse.js";
import { UiStore } from "./state.js";
import { render, ViewCallbacks } from "./views.js";

export interface App {
  store: UiStore;
  start(): void;
  stop(): void;
}

export function createApp(
  root: HTMLElement,
  baseUrl = "",
  pollIntervalMs = 500,
): App {
  const api = new ApiClient(baseUrl);
  const store = new UiStore();
  const sessionId = `web-${Math.random().toString(36).slice(2, 10)}`;

  let pollTimer: ReturnType<typeof setInterval> | null = null;
  let stream: SseConnection | null = null;
  let eventsSeen = 0;
  let skipReplay = 0;

  function ensureStream(): void {
    if (stream) return;
    stream = new SseConnection(
      api.streamUrl(sessionId),
      (event) => {
        if (skipReplay > 0) {
          skipReplay -= 1;
          return;
        }
        eventsSeen += 1;
        store.applyEvent(event);
      },
      () => {
        // on reconnect the server replays session history; skip what we saw
        skipReplay = eventsSeen;
      },
    );
    stream.start();
  }

  async function pollStatus(): Promise<void> {
    try {
      store.setStatus(await api.modelStatus());
    } catch {
      // server not up yet; keep the current screen
    }
  }

  const callbacks: ViewCallbacks = {
    onStart() {
      store.goto(store.ready ? "chat" : "loading");
    },
    async onSend(prompt) {
      ensureStream();
      const outcome = await api.sendPrompt(sessionId, prompt);
      if (outcome === "accepted") {
        store.beginTurn(prompt);
      } else {
        store.setError(outcome === "busy" ? "still generating" : "model not ready");
      }
    },
    onOpenSettings() {
      store.goto("settings");
    },
    onCloseSettings() {
      store.goto(store.ready ? "chat" : "loading");
    },
    async onSaveSettings(username, humanColor, botColor) {
      const saved = await api.updateSettings({
        username,
        colors: { human: humanColor, bot: botColor },
      });
      store.setSettings(saved);
      store.goto(store.ready ? "chat" : "loading");
    },
    onConfirmAction(messageIndex, actionIndex) {
      store.confirmAction(messageIndex, actionIndex);
    },
    onRetry() {
      void pollStatus();
    },
  };

  store.subscribe(() => render(root, store, callbacks));

  return {
    store,
    start() {
      render(root, store, callbacks);
      void api
        .getSettings()
        .then((settings) => store.setSettings(settings))
        .catch(() => {});
      void pollStatus();
      pollTimer = setInterval(() => void pollStatus(), pollIntervalMs);
    },
    stop() {
      if (pollTimer) clearInterval(pollTimer);
      stream?.stop();
    },
  };
}

declare global {
  interface Window {
    stlmApp?: App;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const app = createApp(document.getElementById("app") as HTMLElement);
  window.stlmApp = app;
  app.start();
}
