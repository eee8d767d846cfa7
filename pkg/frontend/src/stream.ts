// Live stream client. The service pushes newline-delimited messages shaped
// `<type> <json>` (not SSE), so this reads the response body incrementally.

import type { StreamMessage } from "./types.js";
import type { FetchLike } from "./api.js";

const INITIAL_BACKOFF_MS = 500;
export const MAX_BACKOFF_MS = 10_000;

/** Reassembles `<type> <json>\n` messages from arbitrary chunk boundaries. */
export class LineParser {
  private remainder = "";

  push(chunk: string): StreamMessage[] {
    const text = this.remainder + chunk;
    const lines = text.split("\n");
    this.remainder = lines.pop() ?? "";
    const messages: StreamMessage[] = [];
    for (const line of lines) {
      if (!line.trim()) continue;
      const space = line.indexOf(" ");
      if (space <= 0) continue;
      const kind = line.slice(0, space);
      try {
        const payload = JSON.parse(line.slice(space + 1));
        messages.push({ kind, payload } as StreamMessage);
      } catch {
        // a malformed line is dropped; the stream stays up
      }
    }
    return messages;
  }
}

export interface StreamCallbacks {
  onMessage: (message: StreamMessage) => void;
  onStatus: (connected: boolean) => void;
}

export class StreamClient {
  private closed = false;
  private backoffMs = INITIAL_BACKOFF_MS;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private controller: AbortController | null = null;

  constructor(
    private readonly url: string,
    private readonly callbacks: StreamCallbacks,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  connect(): void {
    if (this.closed) return;
    void this.loop();
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.controller?.abort();
  }

  /** Exposed for tests: the delay the next reconnect would use. */
  nextBackoffMs(): number {
    return this.backoffMs;
  }

  private async loop(): Promise<void> {
    const parser = new LineParser();
    this.controller = new AbortController();
    try {
      const resp = await this.fetchFn(this.url, { signal: this.controller.signal });
      if (!resp.ok || resp.body === null) throw new Error(`stream HTTP ${resp.status}`);
      this.callbacks.onStatus(true);
      this.backoffMs = INITIAL_BACKOFF_MS;
      const reader = resp.body.getReader();
      const decoder = new TextDecoder();
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        for (const message of parser.push(decoder.decode(value, { stream: true }))) {
          this.callbacks.onMessage(message);
        }
      }
    } catch {
      // fall through to reconnect
    }
    this.callbacks.onStatus(false);
    if (this.closed) return;
    this.timer = setTimeout(() => void this.loop(), this.backoffMs);
    this.backoffMs = Math.min(this.backoffMs * 2, MAX_BACKOFF_MS);
  }
}
