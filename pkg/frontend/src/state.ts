// Single UI store: route, mirrored model status, transcript, busy flag,
// and settings. Views subscribe and re-render on every change.

import type { ModelStatus, Settings } from "./api.js";
import type { SseEvent } from "./sse.js";

export type Route = "landing" | "loading" | "chat" | "settings";

export interface ActionCard {
  kind: "call" | "search" | "calendar";
  contact?: string;
  query?: string;
  when?: string;
  title?: string;
  mismatchedClose?: string;
  confirmed: boolean;
}

export interface Message {
  who: "human" | "bot";
  text: string;
  actions: ActionCard[];
  warnings: string[];
  pending: boolean;
}

export interface DoneInfo {
  stop?: string;
  error?: string;
}

export class UiStore {
  route: Route = "landing";
  status: ModelStatus = { status: "absent" };
  transcript: Message[] = [];
  busy = false;
  settings: Settings = {};
  lastError = "";

  private listeners: Array<() => void> = [];

  subscribe(listener: () => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  get ready(): boolean {
    return this.status.status === "ready";
  }

  /** Chat stays unreachable until the model is ready. */
  goto(route: Route): void {
    if (route === "chat" && !this.ready) route = "loading";
    this.route = route;
    this.emit();
  }

  setStatus(status: ModelStatus): void {
    const wasReady = this.ready;
    this.status = status;
    if (!wasReady && status.status === "ready" && this.route === "loading") {
      this.route = "chat";
    }
    if (status.status !== "ready" && this.route === "chat") {
      this.route = "loading";
    }
    this.emit();
  }

  setSettings(settings: Settings): void {
    this.settings = settings;
    this.emit();
  }

  beginTurn(prompt: string): void {
    this.transcript.push({ who: "human", text: prompt, actions: [], warnings: [], pending: false });
    this.transcript.push({ who: "bot", text: "", actions: [], warnings: [], pending: true });
    this.busy = true;
    this.emit();
  }

  private currentBot(): Message {
    const last = this.transcript[this.transcript.length - 1];
    if (last && last.who === "bot" && last.pending) return last;
    const fresh: Message = { who: "bot", text: "", actions: [], warnings: [], pending: true };
    this.transcript.push(fresh);
    return fresh;
  }

  applyEvent(event: SseEvent): void {
    const data = (event.data ?? {}) as Record<string, unknown>;
    if (event.name === "token") {
      this.currentBot().text += String(data.text ?? "");
    } else if (event.name === "action") {
      this.currentBot().actions.push({
        kind: data.kind as ActionCard["kind"],
        contact: data.contact as string | undefined,
        query: data.query as string | undefined,
        when: data.when as string | undefined,
        title: data.title as string | undefined,
        mismatchedClose: (data.mismatched_close as string | null) ?? undefined,
        confirmed: false,
      });
    } else if (event.name === "warning") {
      this.currentBot().warnings.push(String(data.reason ?? "warning"));
    } else if (event.name === "done") {
      const bot = this.currentBot();
      bot.pending = false;
      if (typeof data.error === "string") bot.warnings.push(data.error);
      this.busy = false;
    }
    this.emit();
  }

  confirmAction(messageIndex: number, actionIndex: number): void {
    const action = this.transcript[messageIndex]?.actions[actionIndex];
    if (action) {
      action.confirmed = true;
      this.emit();
    }
  }

  setError(message: string): void {
    this.lastError = message;
    this.emit();
  }
}
