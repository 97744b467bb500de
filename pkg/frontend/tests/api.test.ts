import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { applyReply, beginSend, initialChat } from "../src/state.js";
import { MessageReply } from "../src/types.js";

type Handler = (url: string, init?: RequestInit) => { status: number; body: unknown };

function fakeFetch(handler: Handler) {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    const { status, body } = handler(url, init);
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { fetchFn, calls };
}

describe("api client", () => {
  it("posts messages with a JSON body", async () => {
    const { fetchFn, calls } = fakeFetch(() => ({
      status: 200,
      body: { reply: "ok?", stage: "ask", slots: {} },
    }));
    const api = new ApiClient("", fetchFn);
    await api.sendMessage("s1", "hello");
    expect(calls[0].url).toBe("/sessions/s1/messages");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({ text: "hello" });
  });

  it("surfaces service error codes", async () => {
    const { fetchFn } = fakeFetch(() => ({
      status: 409, body: { code: "session_closed", message: "done" },
    }));
    const api = new ApiClient("", fetchFn);
    await expect(api.sendMessage("s1", "x")).rejects.toMatchObject({
      status: 409, code: "session_closed",
    });
  });

  it("treats DELETE 404 as already gone", async () => {
    const { fetchFn, calls } = fakeFetch((url) => {
      if (url.startsWith("/reminders/")) {
        return { status: 404, body: { code: "unknown_reminder", message: "" } };
      }
      return { status: 200, body: {} };
    });
    const api = new ApiClient("", fetchFn);
    await expect(api.deleteReminder("ghost")).resolves.toBeUndefined();
    expect(calls.length).toBe(1);
  });

  it("re-throws non-404 delete failures", async () => {
    const { fetchFn } = fakeFetch(() => ({
      status: 500, body: { code: "internal_error", message: "" },
    }));
    const api = new ApiClient("", fetchFn);
    await expect(api.deleteReminder("r")).rejects.toBeInstanceOf(ApiError);
  });
});

describe("golden chat round-trip against the scripted server contract", () => {
  it("reaches the done badge and lists the new reminder", async () => {
    // scripted responses mirroring the supplements scenario end to end
    const replies: MessageReply[] = [
      {
        reply: "Remind me to take my supplements when eating ends, every day. "
          + "Is that correct?",
        stage: "confirm",
        slots: { WHAT: "take my supplements", WHEN: "after dinner" },
      },
      {
        reply: "Reminder saved. Remind me to take my supplements when eating "
          + "ends, every day.",
        stage: "done",
        slots: {},
        reminder_id: "01ULID",
      },
    ];
    let turn = 0;
    const { fetchFn } = fakeFetch((url) => {
      if (url === "/sessions") return { status: 200, body: { session_id: "s9" } };
      if (url === "/sessions/s9/messages") return { status: 200, body: replies[turn++] };
      if (url === "/reminders") {
        return {
          status: 200,
          body: turn < 2 ? [] : [{
            id: "01ULID", message: "take my supplements", dsl: "ended(eating)",
            kind: "activity_based", recurrence: "daily", status: "armed",
            created_at: "2025-03-03 12:00:00",
          }],
        };
      }
      return { status: 404, body: { code: "not_found", message: url } };
    });
    const api = new ApiClient("", fetchFn);

    const { session_id } = await api.createSession();
    let chat = initialChat(session_id);

    chat = beginSend(chat, "Remind me to take my supplements after dinner every day.");
    chat = applyReply(chat, await api.sendMessage(session_id, "Remind me to "
      + "take my supplements after dinner every day."));
    expect(chat.stage).toBe("confirm");

    chat = beginSend(chat, "yes");
    chat = applyReply(chat, await api.sendMessage(session_id, "yes"));
    expect(chat.stage).toBe("done");
    expect(chat.reminderId).toBe("01ULID");

    const rows = await api.listReminders();
    expect(rows.map((r) => r.id)).toEqual(["01ULID"]);
    expect(rows[0].kind).toBe("activity_based");
  });
});
