/** Thin fetch client for the gateway's JSON endpoints. */

import { NodeSnapshot, SendReply } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly errorName: string,
    readonly detail: string,
  ) {
    super(`${errorName}: ${detail}`);
  }
}

export class GatewayApi {
  constructor(
    readonly base: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  async getNodes(): Promise<NodeSnapshot[]> {
    const reply = await this.get("/api/v1/nodes");
    return reply["nodes"] as NodeSnapshot[];
  }

  async sendMessage(text: string, to?: number): Promise<SendReply> {
    const body: Record<string, unknown> = { text };
    if (to !== undefined && to !== null) body["to"] = to;
    return (await this.post("/api/v1/messages", body)) as unknown as SendReply;
  }

  async sendCommand(input: string): Promise<SendReply> {
    return (await this.post("/api/v1/commands", { input })) as unknown as SendReply;
  }

  async sendDtmf(sampleRate: number, pcm16Base64: string): Promise<SendReply> {
    return (await this.post("/api/v1/dtmf", {
      sample_rate: sampleRate,
      pcm16_base64: pcm16Base64,
    })) as unknown as SendReply;
  }

  async getEvents(after: number, limit = 1000): Promise<Record<string, unknown>> {
    return this.get(`/api/v1/events?after=${after}&limit=${limit}`);
  }

  private async get(path: string): Promise<Record<string, unknown>> {
    const resp = await this.fetchFn(this.base + path);
    return this.unwrap(resp);
  }

  private async post(
    path: string,
    body: Record<string, unknown>,
  ): Promise<Record<string, unknown>> {
    const resp = await this.fetchFn(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return this.unwrap(resp);
  }

  private async unwrap(resp: Response): Promise<Record<string, unknown>> {
    const payload = (await resp.json()) as Record<string, unknown>;
    if (!resp.ok) {
      throw new ApiError(
        resp.status,
        String(payload["error"] ?? resp.status),
        String(payload["detail"] ?? ""),
      );
    }
    return payload;
  }
}
