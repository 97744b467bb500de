import { describe, expect, it } from "vitest";

import {
  NotificationFeed, applyReply, beginSend, canSend, initialChat, removeRow,
  sendFailed, sortRows,
} from "../src/state.js";
import { NotificationRecord, ReminderRow } from "../src/types.js";

const record = (seq: number): NotificationRecord => ({
  seq, reminder_id: "r1", message: `m${seq}`,
  fired_at: "2025-03-03 08:00:00", trigger_kind: "time_based",
});

describe("chat view state", () => {
  it("optimistically appends and locks input while pending", () => {
    let chat = initialChat("s1");
    expect(canSend(chat)).toBe(true);
    chat = beginSend(chat, "Remind me to water the plant.");
    expect(chat.messages).toEqual([
      { role: "user", text: "Remind me to water the plant." },
    ]);
    expect(chat.pending).toBe(true);
    expect(canSend(chat)).toBe(false);
  });

  it("ignores sends without a session or while pending", () => {
    const noSession = initialChat();
    expect(beginSend(noSession, "hi")).toBe(noSession);
    const pending = { ...initialChat("s1"), pending: true };
    expect(beginSend(pending, "hi")).toBe(pending);
  });

  it("applies replies and tracks stage transitions", () => {
    let chat = beginSend(initialChat("s1"), "Remind me to call my son at 7pm.");
    chat = applyReply(chat, {
      reply: "Remind me to call my son at 19:00 today. Is that correct?",
      stage: "confirm", slots: {},
    });
    expect(chat.stage).toBe("confirm");
    expect(chat.pending).toBe(false);
    chat = beginSend(chat, "yes");
    chat = applyReply(chat, {
      reply: "Reminder saved.", stage: "done", slots: {}, reminder_id: "R1",
    });
    expect(chat.stage).toBe("done");
    expect(chat.reminderId).toBe("R1");
    expect(canSend(chat)).toBe(false); // input disabled once done
  });

  it("keeps the user's text in the input after a network failure", () => {
    let chat = beginSend(initialChat("s1"), "Remind me to stretch at 9am.");
    chat = sendFailed(chat, "network down");
    expect(chat.pending).toBe(false);
    expect(chat.error).toBe("network down");
    expect(chat.draft).toBe("Remind me to stretch at 9am.");
    expect(chat.messages).toEqual([]);
    expect(canSend(chat)).toBe(true); // retryable
  });
});

describe("reminder rows", () => {
  const row = (id: string, created: string): ReminderRow => ({
    id, message: id, dsl: "at(08:00)", kind: "time_based",
    recurrence: "once", status: "armed", created_at: created,
  });

  it("sorts newest first and removes by id", () => {
    const rows = [row("a", "2025-03-01 10:00:00"),
                  row("b", "2025-03-03 10:00:00"),
                  row("c", "2025-03-02 10:00:00")];
    expect(sortRows(rows).map((r) => r.id)).toEqual(["b", "c", "a"]);
    expect(removeRow(rows, "c").map((r) => r.id)).toEqual(["a", "b"]);
  });
});

describe("notification feed", () => {
  it("dedupes by seq and keeps order", () => {
    const feed = new NotificationFeed();
    expect(feed.add(record(1))).toBe(true);
    expect(feed.add(record(1))).toBe(false);
    expect(feed.add(record(3))).toBe(true);
    expect(feed.add(record(2))).toBe(true);
    expect(feed.records.map((r) => r.seq)).toEqual([1, 2, 3]);
    expect(feed.lastSeq).toBe(3);
  });

  it("addAll reports only the genuinely new records", () => {
    const feed = new NotificationFeed();
    feed.add(record(1));
    const added = feed.addAll([record(1), record(2), record(2), record(3)]);
    expect(added.map((r) => r.seq)).toEqual([2, 3]);
  });
});
