/**
 * Console view model: the client-side mirror of gateway truth.
 *
 * The model never invents state. Node state changes only via the
 * snapshot endpoint or DEVICE_STATE records from the feed; the feed is
 * keyed by server log offsets so a reload or reconnect reconstructs the
 * same view from the gateway alone.
 */

import {
  ConnectionState,
  DTMF_KEYS,
  FeedEntry,
  INTRUSION_CATEGORIES,
  LogRecord,
  NodeSnapshot,
} from "./types.js";

export const FEED_WINDOW = 500;

export class ConsoleViewModel {
  nodes: NodeSnapshot[] = [];
  /** Newest-first window of the server feed. */
  feed: FeedEntry[] = [];
  /** Newest-first intrusion alerts (a subset of the feed). */
  alerts: FeedEntry[] = [];
  keypadBuffer = "";
  composerText = "";
  composerDest: number | null = null;
  composerStatus = "";
  connection: ConnectionState = "OFFLINE";
  lastOffset = 0;
  /** Offsets received more than once (should stay empty). */
  duplicateOffsets: number[] = [];
  private seen = new Set<number>();

  setNodes(nodes: NodeSnapshot[]): void {
    this.nodes = nodes.slice().sort((a, b) => a.addr - b.addr);
  }

  node(addr: number): NodeSnapshot | undefined {
    return this.nodes.find((n) => n.addr === addr);
  }

  /** Ingest one feed record; the offset is the server's 1-based log offset. */
  applyRecord(offset: number, record: LogRecord): void {
    if (this.seen.has(offset)) {
      this.duplicateOffsets.push(offset);
      return;
    }
    this.seen.add(offset);
    if (offset > this.lastOffset) {
      this.lastOffset = offset;
    }
    const entry: FeedEntry = { offset, record };
    this.feed.unshift(entry);
    if (this.feed.length > FEED_WINDOW) {
      this.feed.pop();
    }
    if (record.kind === "MONITOR_EVENT") {
      const category = record.body["category"];
      if (typeof category === "string" && INTRUSION_CATEGORIES.has(category)) {
        this.alerts.unshift(entry);
      }
    } else if (record.kind === "DEVICE_STATE") {
      this.applyDeviceState(record);
    }
  }

  private applyDeviceState(record: LogRecord): void {
    const addr = record.body["node"];
    if (typeof addr !== "number") return;
    const node = this.node(addr);
    if (node === undefined) return;
    const endpoints = record.body["endpoints"];
    if (endpoints !== undefined && typeof endpoints === "object") {
      node.endpoints = { ...(endpoints as Record<string, number>) };
    }
    const shown = record.body["display_last"];
    if (typeof shown === "string") {
      node.display_buffer.push(shown);
      if (node.display_buffer.length > 100) {
        node.display_buffer.shift();
      }
    }
  }

  /** Contiguity audit: offsets missing from 1..lastOffset. */
  missedOffsets(): number[] {
    const missing: number[] = [];
    for (let i = 1; i <= this.lastOffset; i++) {
      if (!this.seen.has(i)) missing.push(i);
    }
    return missing;
  }

  // -- keypad buffer ---------------------------------------------------------

  keypadPress(key: string): void {
    if (DTMF_KEYS.has(key)) {
      this.keypadBuffer += key;
    }
  }

  keypadBackspace(): void {
    this.keypadBuffer = this.keypadBuffer.slice(0, -1);
  }

  keypadClear(): void {
    this.keypadBuffer = "";
  }
}
