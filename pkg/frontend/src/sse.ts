/**
 * Server-sent-events client over fetch streaming.
 *
 * Built on fetch rather than EventSource so resumption is explicit: the
 * gateway's `?after=<offset>` query (mirroring its SSE `id:` field) is
 * re-derived from the last event consumed, and a dropped connection
 * reconnects with exponential backoff, continuing gap-free. Works in
 * browsers and in Node 20+.
 */

export interface SseEvent {
  id: number;
  data: string;
}

export interface SseHandlers {
  onEvent: (event: SseEvent) => void;
  onOpen?: () => void;
  /** Called when the stream drops; reconnection is already scheduled. */
  onDown?: (error: unknown) => void;
}

export interface SseOptions {
  initialBackoffMs?: number;
  maxBackoffMs?: number;
  fetchFn?: typeof fetch;
}

/** Incremental parser for the text/event-stream framing. */
export class SseParser {
  private buffer = "";
  private id: number | null = null;
  private dataLines: string[] = [];

  push(chunk: string): SseEvent[] {
    this.buffer += chunk;
    const events: SseEvent[] = [];
    for (;;) {
      const newline = this.buffer.indexOf("\n");
      if (newline < 0) break;
      const line = this.buffer.slice(0, newline).replace(/\r$/, "");
      this.buffer = this.buffer.slice(newline + 1);
      if (line === "") {
        if (this.dataLines.length > 0 && this.id !== null) {
          events.push({ id: this.id, data: this.dataLines.join("\n") });
        }
        this.id = null;
        this.dataLines = [];
      } else if (line.startsWith("id:")) {
        this.id = parseInt(line.slice(3).trim(), 10);
      } else if (line.startsWith("data:")) {
        this.dataLines.push(line.slice(5).replace(/^ /, ""));
      }
      // comment lines (":") and other fields are ignored
    }
    return events;
  }
}

export class SseStream {
  private after: number;
  private stopped = false;
  private controller: AbortController | null = null;
  private backoffMs: number;
  private readonly initialBackoffMs: number;
  private readonly maxBackoffMs: number;
  private readonly fetchFn: typeof fetch;
  private loopDone: Promise<void> | null = null;

  constructor(
    private readonly urlFor: (after: number) => string,
    private readonly handlers: SseHandlers,
    options: SseOptions = {},
  ) {
    this.after = 0;
    this.initialBackoffMs = options.initialBackoffMs ?? 500;
    this.maxBackoffMs = options.maxBackoffMs ?? 15000;
    this.backoffMs = this.initialBackoffMs;
    this.fetchFn = options.fetchFn ?? fetch;
  }

  start(after: number): void {
    this.after = after;
    this.stopped = false;
    this.loopDone = this.loop();
  }

  async stop(): Promise<void> {
    this.stopped = true;
    this.controller?.abort();
    await this.loopDone?.catch(() => undefined);
  }

  /** Drop the current connection; the loop resumes from the last offset. */
  forceReconnect(): void {
    this.controller?.abort();
  }

  private async loop(): Promise<void> {
    while (!this.stopped) {
      this.controller = new AbortController();
      try {
        const resp = await this.fetchFn(this.urlFor(this.after), {
          signal: this.controller.signal,
          headers: { Accept: "text/event-stream" },
        });
        if (!resp.ok || resp.body === null) {
          throw new Error(`stream returned ${resp.status}`);
        }
        this.backoffMs = this.initialBackoffMs;
        this.handlers.onOpen?.();
        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        const parser = new SseParser();
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const event of parser.push(decoder.decode(value, { stream: true }))) {
            this.after = event.id;
            this.handlers.onEvent(event);
          }
        }
        throw new Error("stream ended");
      } catch (error) {
        if (this.stopped) return;
        this.handlers.onDown?.(error);
        await this.sleep(this.backoffMs);
        this.backoffMs = Math.min(this.backoffMs * 2, this.maxBackoffMs);
      }
    }
  }

  private sleep(ms: number): Promise<void> {
    return new Promise((resolve) => setTimeout(resolve, ms));
  }
}
