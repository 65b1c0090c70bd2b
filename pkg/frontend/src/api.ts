/**
 * Typed client for the broker admin HTTP API.
 */

import type { ClientInfo, GroupDef, PolicyRule } from "./model.js";
import { readSse } from "./sse.js";

export interface PolicyState {
  version: number;
  rules: PolicyRule[];
}

export interface BrokerEvent {
  type: string;
  version?: number;
  uid?: number;
  service?: string;
  namespace?: number;
  count?: number;
}

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number,
    public readonly code: string,
  ) {
    super(message);
  }
}

export class AdminApi {
  constructor(
    private readonly base: string,
    private readonly token: string = "",
  ) {}

  private headers(json = false): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) {
      headers["Content-Type"] = "application/json";
    }
    if (this.token) {
      headers["Authorization"] = `Bearer ${this.token}`;
    }
    return headers;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(`${this.base}${path}`, {
      method,
      headers: this.headers(body !== undefined),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    if (!response.ok) {
      let code = "error";
      let message = text;
      try {
        const parsed = JSON.parse(text) as { error?: string; message?: string };
        code = parsed.error ?? code;
        message = parsed.message ?? message;
      } catch {
        // non-JSON error body; keep raw text
      }
      throw new ApiError(message, response.status, code);
    }
    return JSON.parse(text) as T;
  }

  async groups(): Promise<GroupDef[]> {
    const reply = await this.request<{ groups: GroupDef[] }>("GET", "/v1/groups");
    return reply.groups;
  }

  async policy(): Promise<PolicyState> {
    return this.request<PolicyState>("GET", "/v1/policy");
  }

  async clients(): Promise<ClientInfo[]> {
    const reply = await this.request<{ clients: ClientInfo[] }>("GET", "/v1/clients");
    return reply.clients;
  }

  /** Assign a uid to a group; null or "Global" clears every rule for it. */
  async assign(uid: number, group: string | null): Promise<{ version: number }> {
    return this.request<{ version: number }>("POST", "/v1/policy/assign", { uid, group });
  }

  /** Subscribe to the policy/lookup event stream until the signal aborts. */
  async events(onEvent: (event: BrokerEvent) => void, signal?: AbortSignal): Promise<void> {
    const response = await fetch(`${this.base}/v1/events`, {
      headers: this.headers(),
      signal,
    });
    if (!response.ok || response.body === null) {
      throw new ApiError(`event stream failed: ${response.status}`, response.status, "events");
    }
    await readSse(
      response.body,
      (sse) => {
        try {
          onEvent(JSON.parse(sse.data) as BrokerEvent);
        } catch {
          // skip malformed event payloads
        }
      },
      signal,
    );
  }
}
