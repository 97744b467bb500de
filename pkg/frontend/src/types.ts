// Payload shapes of the reminder service's HTTP and stream API. The UI is
// a pure projection of these responses; it never re-derives reminder logic.

export type Stage = "ask" | "confirm" | "done" | "abandoned";

export interface MessageReply {
  reply: string;
  stage: Stage;
  slots: Record<string, string>;
  reminder_id?: string;
}

export interface ReminderRow {
  id: string;
  message: string;
  dsl: string;
  kind: "time_based" | "activity_based" | "sensor_based" | "state_machine";
  recurrence: "once" | "daily" | "weekly";
  status: "armed" | "disarmed" | "deleted";
  created_at: string;
}

export interface NotificationRecord {
  seq: number;
  reminder_id: string;
  message: string;
  fired_at: string;
  trigger_kind: string;
}

export interface HomeState {
  now: string;
  clock: "wall" | "virtual";
  tick_interval: number;
  sensors: Record<string, boolean | number>;
  activity: { current: string | null; since: string };
}
