import { describe, expect, it } from "vitest";

import { EventSourceLike, NotificationStream } from "../src/sse.js";
import { NotificationFeed } from "../src/state.js";
import { NotificationRecord } from "../src/types.js";

const record = (seq: number): NotificationRecord => ({
  seq, reminder_id: "r1", message: `m${seq}`,
  fired_at: "2025-03-03 08:00:00", trigger_kind: "sensor_based",
});

class FakeSource implements EventSourceLike {
  onmessage: ((event: { data: string }) => void) | null = null;
  onerror: ((event?: unknown) => void) | null = null;
  closed = false;

  close(): void {
    this.closed = true;
  }

  emit(payload: NotificationRecord): void {
    this.onmessage?.({ data: JSON.stringify(payload) });
  }
}

function harness(backlog: () => NotificationRecord[]) {
  const sources: FakeSource[] = [];
  const timers: Array<() => void> = [];
  const feed = new NotificationFeed();
  const seen: NotificationRecord[] = [];
  const statuses: string[] = [];
  const stream = new NotificationStream({
    url: "/notifications/stream",
    feed,
    backfill: async () => backlog().filter((r) => r.seq > feed.lastSeq),
    onRecord: (r) => seen.push(r),
    onStatus: (s) => statuses.push(s),
    makeSource: (url) => {
      const source = new FakeSource();
      sources.push(source);
      return source;
    },
    scheduler: (fn) => timers.push(fn),
    backoffMs: 100,
  });
  const flushTimers = async () => {
    while (timers.length) {
      timers.shift()!();
      await Promise.resolve();
      await Promise.resolve();
    }
  };
  return { stream, sources, feed, seen, statuses, flushTimers };
}

describe("notification stream", () => {
  it("delivers a pushed event to the toast callback immediately", async () => {
    const { stream, sources, seen } = harness(() => []);
    await stream.start();
    const before = Date.now();
    sources[0].emit(record(1));
    const elapsed = Date.now() - before;
    expect(seen.map((r) => r.seq)).toEqual([1]);
    expect(elapsed).toBeLessThan(1000); // dispatch is synchronous
  });

  it("reconnects after a drop and backfills without duplicates", async () => {
    const server: NotificationRecord[] = [];
    const { stream, sources, seen, flushTimers, statuses } =
      harness(() => server);
    await stream.start();

    server.push(record(1));
    sources[0].emit(record(1));

    // connection drops; two firings happen while offline
    sources[0].onerror?.();
    server.push(record(2), record(3));
    expect(statuses).toContain("reconnecting");

    await flushTimers(); // reconnect: backfill replays 2 and 3
    expect(sources.length).toBe(2);
    expect(seen.map((r) => r.seq)).toEqual([1, 2, 3]);

    // the live stream re-sends an already-backfilled record: deduped
    sources[1].emit(record(3));
    sources[1].emit(record(4));
    expect(seen.map((r) => r.seq)).toEqual([1, 2, 3, 4]);
  });

  it("stop() closes the source and halts reconnects", async () => {
    const { stream, sources, flushTimers } = harness(() => []);
    await stream.start();
    stream.stop();
    expect(sources[0].closed).toBe(true);
    await flushTimers();
    expect(sources.length).toBe(1);
  });

  it("keeps retrying while the backfill endpoint is down", async () => {
    const sources: FakeSource[] = [];
    const timers: Array<() => void> = [];
    let failures = 2;
    const feed = new NotificationFeed();
    const stream = new NotificationStream({
      url: "/s",
      feed,
      backfill: async () => {
        if (failures-- > 0) throw new Error("offline");
        return [record(1)];
      },
      onRecord: () => undefined,
      makeSource: () => {
        const s = new FakeSource();
        sources.push(s);
        return s;
      },
      scheduler: (fn) => timers.push(fn),
      backoffMs: 10,
    });
    await stream.start();
    expect(sources.length).toBe(0); // first backfill failed, no source yet
    while (timers.length) {
      timers.shift()!();
      await new Promise((resolve) => setTimeout(resolve, 0));
    }
    expect(sources.length).toBe(1);
    expect(feed.lastSeq).toBe(1);
  });
});
