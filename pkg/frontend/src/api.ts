import { HomeState, MessageReply, NotificationRecord, ReminderRow } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
  }
}

async function fail(response: Response): Promise<never> {
  let code = "http_error";
  let message = `HTTP ${response.status}`;
  try {
    const body = await response.json();
    if (body && typeof body.code === "string") {
      code = body.code;
      message = body.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the generic message
  }
  throw new ApiError(response.status, code, message);
}

export class ApiClient {
  constructor(private base: string = "", private fetchFn: FetchLike = fetch.bind(globalThis)) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(`${this.base}${path}`);
    if (!response.ok) await fail(response);
    return response.json() as Promise<T>;
  }

  private async send<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.base}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) await fail(response);
    return response.json() as Promise<T>;
  }

  createSession(): Promise<{ session_id: string }> {
    return this.send("POST", "/sessions");
  }

  sendMessage(sessionId: string, text: string): Promise<MessageReply> {
    return this.send("POST", `/sessions/${sessionId}/messages`, { text });
  }

  listReminders(): Promise<ReminderRow[]> {
    return this.get("/reminders");
  }

  /** Deleting an already-gone reminder is fine: the row disappears either way. */
  async deleteReminder(id: string): Promise<void> {
    try {
      await this.send("DELETE", `/reminders/${id}`);
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) return;
      throw err;
    }
  }

  notificationsSince(seq: number): Promise<NotificationRecord[]> {
    return this.get(`/notifications?since=${seq}`);
  }

  getState(): Promise<HomeState> {
    return this.get("/state");
  }
}
