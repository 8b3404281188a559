// Headless console session: everything the views render comes out of here,
// and the integration tests drive this directly, no DOM required.

import { ApiClient, ApiError } from "./api.js";
import { openStream, type StreamHandle } from "./sse.js";
import {
  applyDeliveries,
  applyDelivery,
  approvalInbox,
  dropNotice,
  feed,
  initialState,
  markResolved,
  pushNotice,
  type ConsoleState,
} from "./store.js";
import type { Circle, Delivery, Participant, Task, TypeSpec } from "./types.js";

export type Listener = () => void;

export class ConsoleSession {
  state: ConsoleState = initialState();
  profile: Participant | null = null;
  circles: Circle[] = [];
  tasks: Task[] = [];
  types: Record<string, TypeSpec> = {};
  cursor = 0;
  streamStatus: "open" | "retry" | "closed" = "closed";

  private stream: StreamHandle | null = null;
  private listeners = new Set<Listener>();
  private pendingAck = 0;

  constructor(public readonly api: ApiClient) {}

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  private setState(next: ConsoleState): void {
    if (next !== this.state) {
      this.state = next;
      this.emit();
    }
  }

  /** Login: profile, full mailbox backlog, then the live stream. */
  async start(): Promise<Participant> {
    this.profile = await this.api.me();
    const backlog = await this.api.fullMailbox();
    const page = await this.api.poll(0, 1);
    this.cursor = page.cursor;
    this.setState(applyDeliveries(this.state, backlog));
    await this.refreshDirectory();
    this.stream = openStream({
      base: this.api.base,
      token: this.api.token,
      afterSeq: this.state.lastSeq,
      onDelivery: (delivery) => this.onDelivery(delivery),
      onStatus: (status) => {
        this.streamStatus = status;
        this.emit();
      },
    });
    return this.profile;
  }

  stop(): void {
    this.stream?.stop();
    this.stream = null;
  }

  private onDelivery(delivery: Delivery): void {
    this.setState(applyDelivery(this.state, delivery));
    void this.ackThrough(delivery.seq);
    // A task-change notice means our task snapshots are stale.
    if (delivery.body.payload.attachment?.["kind"] === "task_change") {
      void this.refreshTasks();
    }
  }

  /** Acks advance the server cursor; failures queue for the next attempt. */
  async ackThrough(seq: number): Promise<void> {
    const target = Math.max(seq, this.pendingAck);
    if (target <= this.cursor) return;
    try {
      const acked = await this.api.ack(target);
      this.cursor = acked.cursor;
      this.pendingAck = 0;
    } catch {
      this.pendingAck = target; // offline: queue, never fabricate
    }
    this.emit();
  }

  async refreshDirectory(): Promise<void> {
    this.circles = (await this.api.circles()).circles;
    this.types = (await this.api.types()).types;
    await this.refreshTasks();
  }

  async refreshTasks(): Promise<void> {
    if (!this.profile) return;
    if (this.profile.role === "EndUser") {
      this.tasks = (await this.api.tasks()).tasks;
    } else {
      const byId = new Map<string, Task>();
      for (const circle of this.circles) {
        for (const task of (await this.api.tasks({ circle: circle.id })).tasks) {
          byId.set(task.id, task);
        }
      }
      this.tasks = [...byId.values()].sort((a, b) => a.id.localeCompare(b.id));
    }
    this.emit();
  }

  inbox(): Delivery[] {
    return approvalInbox(this.state);
  }

  feed(): Delivery[] {
    return feed(this.state);
  }

  notice(text: string): void {
    this.setState(pushNotice(this.state, text));
  }

  dismissNotice(index: number): void {
    this.setState(dropNotice(this.state, index));
  }

  /** OK/Reject click. Duplicate or closed sessions surface as notices. */
  async respond(notificationId: string, verdict: "OK" | "Reject"): Promise<void> {
    try {
      const session = await this.api.respondApproval(notificationId, verdict);
      this.setState(markResolved(this.state, notificationId, session.outcome));
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.setState(
          pushNotice(
            markResolved(this.state, notificationId, error.code),
            `${notificationId}: ${error.code}`,
          ),
        );
      } else {
        this.notice(error instanceof Error ? error.message : String(error));
      }
    }
  }

  async compose(circle: string, typeCode: string, text: string): Promise<void> {
    try {
      const outcome = await this.api.submitNotification(circle, typeCode, { text });
      this.notice(`${outcome.notification_id} ${outcome.state}`);
    } catch (error) {
      this.notice(error instanceof Error ? error.message : String(error));
    }
  }

  async saveTask(
    taskId: string,
    diff: Record<string, unknown>,
    notifyPatient: boolean,
  ): Promise<void> {
    try {
      await this.api.changeTask(taskId, diff, notifyPatient);
      await this.refreshTasks();
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.notice(`task ${taskId}: ${error.code}; reloading latest`);
        await this.refreshTasks();
      } else {
        this.notice(error instanceof Error ? error.message : String(error));
      }
    }
  }

  async report(taskId: string, metrics: Record<string, string | number>): Promise<void> {
    try {
      await this.api.reportProgress(taskId, metrics);
      await this.refreshTasks();
    } catch (error) {
      this.notice(error instanceof Error ? error.message : String(error));
    }
  }

  async reachGoal(taskId: string, label: string): Promise<void> {
    try {
      await this.api.goalReached(taskId, label);
      await this.refreshTasks();
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.notice(`goal ${label}: ${error.code}`);
        await this.refreshTasks();
      } else {
        this.notice(error instanceof Error ? error.message : String(error));
      }
    }
  }
}
