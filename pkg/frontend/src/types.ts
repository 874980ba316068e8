/** Wire types mirrored from the gateway API (docs/api.md, docs/log-format.md). */

export interface LogRecord {
  at: number;
  kind: string;
  body: Record<string, unknown>;
}

export interface FeedEntry {
  offset: number;
  record: LogRecord;
}

export interface NodeSnapshot {
  addr: number;
  role: string;
  associated: boolean;
  endpoints: Record<string, number>;
  display_buffer: string[];
}

export interface InstructionEcho {
  kind: string;
  dest: number;
  text?: string;
  endpoint?: number;
  action?: string;
  level?: number;
}

export interface SendReply {
  seq: number;
  delivery: string;
  instruction?: InstructionEcho;
  keys?: string;
}

export type ConnectionState = "LIVE" | "RECONNECTING" | "OFFLINE";

export const INTRUSION_CATEGORIES = new Set([
  "INTRUSION_FOREIGN_PAN",
  "INTRUSION_UNKNOWN_SOURCE",
]);

export const DTMF_KEYS = new Set("0123456789*#ABCD".split(""));
