// Pure view state. Every transition is a plain function from old state to
// new state so the chat flow, list handling, and feed dedupe are testable
// without a DOM; main.ts only renders what these produce.

import { MessageReply, NotificationRecord, ReminderRow, Stage } from "./types.js";

export interface ChatMessage {
  role: "user" | "assistant";
  text: string;
}

export interface ChatViewState {
  sessionId: string | null;
  messages: ChatMessage[];
  stage: Stage;
  pending: boolean;
  draft: string;
  reminderId: string | null;
  error: string | null;
}

export function initialChat(sessionId: string | null = null): ChatViewState {
  return { sessionId, messages: [], stage: "ask", pending: false, draft: "",
           reminderId: null, error: null };
}

export function canSend(state: ChatViewState): boolean {
  return state.sessionId !== null && !state.pending
    && state.stage !== "done" && state.stage !== "abandoned";
}

/** Optimistically append the user's message and lock the input. */
export function beginSend(state: ChatViewState, text: string): ChatViewState {
  if (!canSend(state) || !text.trim()) return state;
  return {
    ...state,
    messages: [...state.messages, { role: "user", text }],
    pending: true,
    draft: "",
    error: null,
  };
}

export function applyReply(state: ChatViewState, reply: MessageReply): ChatViewState {
  return {
    ...state,
    messages: [...state.messages, { role: "assistant", text: reply.reply }],
    stage: reply.stage,
    pending: false,
    reminderId: reply.reminder_id ?? state.reminderId,
  };
}

/** Network failure: drop the optimistic message back into the input. */
export function sendFailed(state: ChatViewState, message: string): ChatViewState {
  const messages = [...state.messages];
  let draft = state.draft;
  const last = messages[messages.length - 1];
  if (last && last.role === "user") {
    draft = last.text;
    messages.pop();
  }
  return { ...state, messages, pending: false, draft, error: message };
}

export function sortRows(rows: ReminderRow[]): ReminderRow[] {
  return [...rows].sort((a, b) => b.created_at.localeCompare(a.created_at));
}

export function removeRow(rows: ReminderRow[], id: string): ReminderRow[] {
  return rows.filter((row) => row.id !== id);
}

/** Live notification feed with seq-based dedupe across stream + backfill. */
export class NotificationFeed {
  records: NotificationRecord[] = [];
  private seen = new Set<number>();

  get lastSeq(): number {
    return this.records.length ? this.records[this.records.length - 1].seq : 0;
  }

  /** Returns true when the record was new (a toast should show). */
  add(record: NotificationRecord): boolean {
    if (this.seen.has(record.seq)) return false;
    this.seen.add(record.seq);
    this.records.push(record);
    this.records.sort((a, b) => a.seq - b.seq);
    return true;
  }

  addAll(records: NotificationRecord[]): NotificationRecord[] {
    return records.filter((record) => this.add(record));
  }
}
