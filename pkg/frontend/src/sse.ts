// Server-sent-events client built on fetch streaming, so it works in the
// browser and under node-based tests alike. Reconnects with backoff until
// stopped; comment heartbeats are ignored by the parser.

export interface SseEvent {
  name: string;
  data: unknown;
}

export type SseHandler = (event: SseEvent) => void;

/** Incremental parser for an SSE byte stream; feed decoded text chunks. */
export class SseParser {
  private buffer = "";

  feed(chunk: string): SseEvent[] {
    this.buffer += chunk.replace(/\r\n/g, "\n");
    const events: SseEvent[] = [];
    let at: number;
    while ((at = this.buffer.indexOf("\n\n")) !== -1) {
      const frame = this.buffer.slice(0, at);
      this.buffer = this.buffer.slice(at + 2);
      const event = parseFrame(frame);
      if (event) events.push(event);
    }
    return events;
  }
}

function parseFrame(frame: string): SseEvent | null {
  let name = "message";
  const dataLines: string[] = [];
  for (const line of frame.split("\n")) {
    if (line.startsWith(":")) continue; // heartbeat/comment
    if (line.startsWith("event: ")) name = line.slice(7);
    else if (line.startsWith("data: ")) dataLines.push(line.slice(6));
  }
  if (dataLines.length === 0) return null;
  const raw = dataLines.join("\n");
  let data: unknown = raw;
  try {
    data = JSON.parse(raw);
  } catch {
    // leave as text
  }
  return { name, data };
}

export class SseConnection {
  private stopped = false;
  private controller: AbortController | null = null;

  constructor(
    readonly url: string,
    readonly onEvent: SseHandler,
    readonly onError: (err: unknown) => void = () => {},
  ) {}

  start(): void {
    void this.loop();
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }

  private async loop(): Promise<void> {
    let backoffMs = 500;
    while (!this.stopped) {
      this.controller = new AbortController();
      try {
        const res = await fetch(this.url, {
          signal: this.controller.signal,
          headers: { Accept: "text/event-stream" },
        });
        if (!res.ok || !res.body) throw new Error(`stream returned ${res.status}`);
        backoffMs = 500;
        const reader = res.body.getReader();
        const decoder = new TextDecoder();
        const parser = new SseParser();
        while (!this.stopped) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const event of parser.feed(decoder.decode(value, { stream: true }))) {
            this.onEvent(event);
          }
        }
      } catch (err) {
        if (this.stopped) return;
        this.onError(err);
      }
      if (this.stopped) return;
      await sleep(backoffMs);
      backoffMs = Math.min(backoffMs * 2, 8000);
    }
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
