// DOM wiring. All decisions live in state.ts / sse.ts / api.ts; this file
// only renders state and forwards user input.

import { ApiClient } from "./api.js";
import { NotificationStream } from "./sse.js";
import {
  ChatViewState, NotificationFeed, applyReply, beginSend, canSend,
  initialChat, removeRow, sendFailed, sortRows,
} from "./state.js";
import { NotificationRecord, ReminderRow } from "./types.js";

const api = new ApiClient("");
const feed = new NotificationFeed();
let chat: ChatViewState = initialChat();
let rows: ReminderRow[] = [];

const el = (id: string) => document.getElementById(id)!;

function renderChat(): void {
  const pane = el("chat-messages");
  pane.innerHTML = "";
  for (const message of chat.messages) {
    const bubble = document.createElement("div");
    bubble.className = `bubble ${message.role}`;
    bubble.textContent = message.text;
    pane.appendChild(bubble);
  }
  pane.scrollTop = pane.scrollHeight;

  const badge = el("stage-badge");
  badge.textContent = chat.stage;
  badge.className = `badge stage-${chat.stage}`;

  const input = el("chat-input") as HTMLInputElement;
  input.disabled = !canSend(chat);
  if (document.activeElement !== input) input.value = chat.draft;
  (el("chat-send") as HTMLButtonElement).disabled = !canSend(chat);

  el("chat-error").textContent = chat.error ?? "";
  el("new-reminder").hidden = chat.stage !== "done" && chat.stage !== "abandoned";
}

function renderRows(): void {
  const list = el("reminder-list");
  list.innerHTML = "";
  if (!rows.length) {
    const empty = document.createElement("p");
    empty.className = "empty";
    empty.textContent = "No reminders yet. Ask for one in the chat.";
    list.appendChild(empty);
    return;
  }
  for (const row of sortRows(rows)) {
    const item = document.createElement("div");
    item.className = "reminder-row";
    const tag = document.createElement("span");
    tag.className = `tag kind-${row.kind}`;
    tag.textContent = row.kind.replace("_", " ");
    const text = document.createElement("span");
    text.className = "reminder-text";
    text.textContent = `${row.message} (${row.recurrence})`;
    const del = document.createElement("button");
    del.textContent = "delete";
    del.onclick = async () => {
      await api.deleteReminder(row.id);
      rows = removeRow(rows, row.id);
      renderRows();
    };
    item.append(tag, text, del);
    list.appendChild(item);
  }
}

function toast(record: NotificationRecord): void {
  const box = document.createElement("div");
  box.className = "toast";
  box.textContent = `Reminder: ${record.message}`;
  el("toasts").appendChild(box);
  setTimeout(() => box.remove(), 4000);

  const row = document.createElement("div");
  row.className = "feed-row";
  row.textContent = `#${record.seq} ${record.fired_at} ${record.message}`;
  el("feed").prepend(row);
}

async function refreshRows(): Promise<void> {
  rows = await api.listReminders();
  renderRows();
}

async function sendCurrent(): Promise<void> {
  const input = el("chat-input") as HTMLInputElement;
  const text = input.value.trim();
  if (!text || !canSend(chat)) return;
  chat = beginSend(chat, text);
  input.value = "";
  renderChat();
  try {
    const reply = await api.sendMessage(chat.sessionId!, text);
    chat = applyReply(chat, reply);
    if (reply.reminder_id) await refreshRows();
  } catch (err) {
    chat = sendFailed(chat, err instanceof Error ? err.message : "request failed");
  }
  renderChat();
}

async function newSession(): Promise<void> {
  const { session_id } = await api.createSession();
  chat = initialChat(session_id);
  renderChat();
}

async function pollState(): Promise<void> {
  try {
    const state = await api.getState();
    el("debug-now").textContent = `${state.now} (${state.clock})`;
    el("debug-activity").textContent = state.activity.current ?? "none";
    const sensors = el("debug-sensors");
    sensors.innerHTML = "";
    for (const [id, value] of Object.entries(state.sensors)) {
      const line = document.createElement("div");
      line.textContent = `${id}: ${value}`;
      sensors.appendChild(line);
    }
  } catch {
    el("debug-now").textContent = "server unreachable";
  }
}

async function boot(): Promise<void> {
  el("chat-send").onclick = () => void sendCurrent();
  (el("chat-input") as HTMLInputElement).onkeydown = (event) => {
    if (event.key === "Enter") void sendCurrent();
  };
  el("new-reminder").onclick = () => void newSession();

  await newSession();
  await refreshRows();

  const stream = new NotificationStream({
    url: "/notifications/stream",
    feed,
    backfill: (since) => api.notificationsSince(since),
    onRecord: toast,
    onStatus: (status) => {
      const el_ = el("stream-status");
      el_.textContent = status === "live" ? "" : status;
    },
  });
  void stream.start();

  void pollState();
  setInterval(() => void pollState(), 2000);
}

void boot();
