// Live notification stream: EventSource with reconnect-and-backfill. On
// every (re)connect the client first replays GET /notifications?since=
// from the last seen seq, so records missed during a drop arrive exactly
// once (the feed dedupes overlap between backfill and the live stream).

import { NotificationFeed } from "./state.js";
import { NotificationRecord } from "./types.js";

export interface EventSourceLike {
  onmessage: ((event: { data: string }) => void) | null;
  onerror: ((event?: unknown) => void) | null;
  close(): void;
}

export type SourceFactory = (url: string) => EventSourceLike;
export type Scheduler = (fn: () => void, ms: number) => void;

export type StreamStatus = "connecting" | "live" | "reconnecting" | "stopped";

export interface StreamOptions {
  url: string;
  feed: NotificationFeed;
  backfill: (since: number) => Promise<NotificationRecord[]>;
  onRecord: (record: NotificationRecord) => void;
  onStatus?: (status: StreamStatus) => void;
  makeSource?: SourceFactory;
  scheduler?: Scheduler;
  backoffMs?: number;
  maxBackoffMs?: number;
}

export class NotificationStream {
  private source: EventSourceLike | null = null;
  private stopped = false;
  private backoff: number;
  private readonly makeSource: SourceFactory;
  private readonly scheduler: Scheduler;

  constructor(private opts: StreamOptions) {
    this.backoff = opts.backoffMs ?? 1000;
    this.makeSource = opts.makeSource
      ?? ((url) => new EventSource(url) as unknown as EventSourceLike);
    this.scheduler = opts.scheduler ?? ((fn, ms) => setTimeout(fn, ms));
  }

  async start(): Promise<void> {
    this.stopped = false;
    await this.connect();
  }

  stop(): void {
    this.stopped = true;
    this.source?.close();
    this.source = null;
    this.status("stopped");
  }

  private status(status: StreamStatus): void {
    this.opts.onStatus?.(status);
  }

  private async connect(): Promise<void> {
    if (this.stopped) return;
    this.status("connecting");
    try {
      const missed = await this.opts.backfill(this.opts.feed.lastSeq);
      for (const record of this.opts.feed.addAll(missed)) {
        this.opts.onRecord(record);
      }
    } catch {
      this.retry();
      return;
    }
    const source = this.makeSource(this.opts.url);
    this.source = source;
    source.onmessage = (event) => {
      this.backoff = this.opts.backoffMs ?? 1000;
      let record: NotificationRecord;
      try {
        record = JSON.parse(event.data) as NotificationRecord;
      } catch {
        return;
      }
      if (this.opts.feed.add(record)) {
        this.opts.onRecord(record);
      }
    };
    source.onerror = () => {
      source.close();
      if (this.source === source) this.source = null;
      this.retry();
    };
    this.status("live");
  }

  private retry(): void {
    if (this.stopped) return;
    this.status("reconnecting");
    const wait = this.backoff;
    this.backoff = Math.min(this.backoff * 2, this.opts.maxBackoffMs ?? 15000);
    this.scheduler(() => void this.connect(), wait);
  }
}
