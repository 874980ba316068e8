/**
 * Console controller: wires the API client and the event stream to the
 * view model. DOM-free, so the scripted integration tests drive it the
 * same way the browser layer does.
 *
 * Every user action maps to exactly one API call, and nothing changes
 * node state optimistically; tiles flip when the corresponding
 * DEVICE_STATE record arrives on the feed.
 */

import { ApiError, GatewayApi } from "./api.js";
import { ConsoleViewModel } from "./model.js";
import { SseOptions, SseStream } from "./sse.js";
import { LogRecord, SendReply } from "./types.js";

export interface ConsoleOptions {
  sse?: SseOptions;
  fetchFn?: typeof fetch;
  /** Re-render hook; fired after every model change. */
  onChange?: () => void;
  /** Delay before retrying a failed initial connect. */
  connectRetryMs?: number;
}

export class ConsoleController {
  readonly vm = new ConsoleViewModel();
  readonly api: GatewayApi;
  private stream: SseStream | null = null;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private readonly onChange: () => void;
  private readonly sseOptions: SseOptions;
  private readonly connectRetryMs: number;

  constructor(
    readonly base: string,
    options: ConsoleOptions = {},
  ) {
    this.api = new GatewayApi(base, options.fetchFn ?? fetch);
    this.onChange = options.onChange ?? (() => undefined);
    this.sseOptions = { ...options.sse };
    if (options.fetchFn && this.sseOptions.fetchFn === undefined) {
      this.sseOptions.fetchFn = options.fetchFn;
    }
    this.connectRetryMs = options.connectRetryMs ?? 3000;
  }

  /** Fetch the node snapshot and subscribe to the feed from the last offset. */
  async connect(): Promise<boolean> {
    try {
      this.vm.setNodes(await this.api.getNodes());
    } catch (error) {
      this.vm.connection = "OFFLINE";
      this.onChange();
      this.retryTimer = setTimeout(() => void this.connect(), this.connectRetryMs);
      return false;
    }
    this.startStream();
    this.onChange();
    return true;
  }

  private startStream(): void {
    if (this.stream !== null) return;
    this.stream = new SseStream(
      (after) => `${this.base}/api/v1/events/stream?after=${after}`,
      {
        onEvent: (event) => {
          const record = JSON.parse(event.data) as LogRecord;
          this.vm.applyRecord(event.id, record);
          this.onChange();
        },
        onOpen: () => {
          this.vm.connection = "LIVE";
          // reconcile node state in case records were emitted while away
          void this.api
            .getNodes()
            .then((nodes) => {
              this.vm.setNodes(nodes);
              this.onChange();
            })
            .catch(() => undefined);
          this.onChange();
        },
        onDown: () => {
          this.vm.connection = "RECONNECTING";
          this.onChange();
        },
      },
      this.sseOptions,
    );
    this.stream.start(this.vm.lastOffset);
  }

  async disconnect(): Promise<void> {
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    await this.stream?.stop();
    this.stream = null;
    this.vm.connection = "OFFLINE";
    this.onChange();
  }

  /** Sever the live stream once; it resumes from the last offset. */
  forceReconnect(): void {
    this.stream?.forceReconnect();
  }

  async sendMessage(text: string, to?: number): Promise<SendReply | null> {
    return this.submit(() => this.api.sendMessage(text, to));
  }

  /** Send the keypad buffer through the commands endpoint and clear it. */
  async sendKeypad(): Promise<SendReply | null> {
    const buffer = this.vm.keypadBuffer;
    const reply = await this.submit(() => this.api.sendCommand(buffer));
    if (reply !== null) {
      this.vm.keypadClear();
      this.onChange();
    }
    return reply;
  }

  private async submit(call: () => Promise<SendReply>): Promise<SendReply | null> {
    try {
      const reply = await call();
      this.vm.composerStatus = `seq ${reply.seq}: ${reply.delivery}`;
      this.onChange();
      return reply;
    } catch (error) {
      // 4xx bodies are surfaced verbatim next to the composer
      this.vm.composerStatus =
        error instanceof ApiError ? `${error.errorName}: ${error.detail}` : String(error);
      this.onChange();
      return null;
    }
  }
}
