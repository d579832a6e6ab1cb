// Typed client for the local chat service; the only network surface the UI uses.

export type ModelStatus =
  | { status: "absent" }
  | { status: "downloading"; done: number; total: number }
  | { status: "verifying" }
  | { status: "loading" }
  | { status: "ready"; model?: string }
  | { status: "error"; message?: string };

export interface Settings {
  username?: string;
  colors?: { human?: string; bot?: string };
  avatar?: string;
}

export type ChatSubmitResult = "accepted" | "busy" | "not-ready";

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  async modelStatus(): Promise<ModelStatus> {
    const res = await fetch(`${this.baseUrl}/api/model/status`);
    if (!res.ok) throw new Error(`status endpoint returned ${res.status}`);
    return (await res.json()) as ModelStatus;
  }

  async sendPrompt(sessionId: string, prompt: string): Promise<ChatSubmitResult> {
    const res = await fetch(`${this.baseUrl}/api/chat`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ session_id: sessionId, prompt }),
    });
    if (res.status === 202) return "accepted";
    if (res.status === 409) return "busy";
    if (res.status === 503) return "not-ready";
    throw new Error(`chat endpoint returned ${res.status}`);
  }

  async cancel(sessionId: string): Promise<void> {
    await fetch(`${this.baseUrl}/api/chat/cancel?session_id=${encodeURIComponent(sessionId)}`, {
      method: "POST",
    });
  }

  streamUrl(sessionId: string): string {
    return `${this.baseUrl}/api/chat/stream?session_id=${encodeURIComponent(sessionId)}`;
  }

  async getSettings(): Promise<Settings> {
    const res = await fetch(`${this.baseUrl}/api/settings`);
    if (!res.ok) throw new Error(`settings endpoint returned ${res.status}`);
    return (await res.json()) as Settings;
  }

  async updateSettings(patch: Settings): Promise<Settings> {
    const res = await fetch(`${this.baseUrl}/api/settings`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(patch),
    });
    if (!res.ok) throw new Error(`settings update returned ${res.status}`);
    return (await res.json()) as Settings;
  }
}
