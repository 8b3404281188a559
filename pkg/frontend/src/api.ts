// Thin typed client over the coordination API. Every command carries a
// fresh idempotency key, so an impatient double-click can never double-send.

import type {
  Circle,
  Delivery,
  MailboxPage,
  NotificationView,
  Participant,
  Payload,
  RoutingOutcome,
  Task,
  TypeSpec,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

function freshKey(): string {
  return typeof crypto !== "undefined" && "randomUUID" in crypto
    ? crypto.randomUUID()
    : `k-${Date.now()}-${Math.random().toString(36).slice(2)}`;
}

export class ApiClient {
  constructor(
    public readonly base: string,
    public readonly token: string,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {
      Authorization: `Bearer ${this.token}`,
    };
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      headers["Idempotency-Key"] = freshKey();
    }
    const response = await fetch(`${this.base}${path}`, {
      method,
      headers,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const text = await response.text();
    const parsed = text ? JSON.parse(text) : {};
    if (!response.ok) {
      throw new ApiError(
        response.status,
        parsed.code ?? `HTTP${response.status}`,
        parsed.message ?? text,
      );
    }
    return parsed as T;
  }

  get<T>(path: string): Promise<T> {
    return this.request<T>("GET", path);
  }

  me(): Promise<Participant> {
    return this.get("/me");
  }

  participant(id: string): Promise<Participant> {
    return this.get(`/participants/${id}`);
  }

  circles(): Promise<{ circles: Circle[] }> {
    return this.get("/circles");
  }

  types(): Promise<{ types: Record<string, TypeSpec> }> {
    return this.get("/types");
  }

  poll(afterSeq: number, maxBatch = 100): Promise<MailboxPage> {
    return this.get(`/mailbox?after_seq=${afterSeq}&max_batch=${maxBatch}`);
  }

  async fullMailbox(): Promise<Delivery[]> {
    const all: Delivery[] = [];
    let after = 0;
    for (;;) {
      const page = await this.poll(after, 200);
      all.push(...page.deliveries);
      if (page.count < 200) return all;
      after = page.deliveries[page.deliveries.length - 1]!.seq;
    }
  }

  ack(upToSeq: number): Promise<{ cursor: number; mailbox: string }> {
    return this.request("POST", "/mailbox/ack", { up_to_seq: upToSeq });
  }

  submitNotification(circle: string, typeCode: string, payload: Payload): Promise<RoutingOutcome> {
    return this.request("POST", "/notifications", {
      circle,
      payload,
      type_code: typeCode,
    });
  }

  respondApproval(notificationId: string, verdict: "OK" | "Reject") {
    return this.request<{ outcome: string }>(
      "POST",
      `/notifications/${notificationId}/approvals`,
      { verdict },
    );
  }

  notification(id: string): Promise<NotificationView> {
    return this.get(`/notifications/${id}`);
  }

  tasks(params: { circle?: string; patient?: string } = {}): Promise<{ tasks: Task[] }> {
    const query = new URLSearchParams();
    if (params.circle) query.set("circle", params.circle);
    if (params.patient) query.set("patient", params.patient);
    const suffix = query.toString();
    return this.get(`/tasks${suffix ? `?${suffix}` : ""}`);
  }

  createTask(body: {
    circle: string;
    patient: string;
    instructions: string[];
    schedule?: { text?: string; start?: number; end?: number };
    goals?: { label: string; target: string }[];
  }): Promise<Task> {
    return this.request("POST", "/tasks", body);
  }

  changeTask(
    taskId: string,
    diff: Record<string, unknown>,
    notifyPatient: boolean,
  ): Promise<{ version: number; notification_id: string }> {
    return this.request("PATCH", `/tasks/${taskId}`, {
      diff,
      notify_patient: notifyPatient,
    });
  }

  reportProgress(taskId: string, metrics: Record<string, string | number>) {
    return this.request<{ id: string }>("POST", `/tasks/${taskId}/reports`, { metrics });
  }

  goalReached(taskId: string, label: string) {
    return this.request<{ id: string }>(
      "POST",
      `/tasks/${taskId}/goals/${encodeURIComponent(label)}/reached`,
      {},
    );
  }
}
