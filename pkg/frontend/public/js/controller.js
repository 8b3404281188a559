// Headless console session: everything the views render comes out of here,
// and the integration tests drive this directly, no DOM required.
import { ApiError } from "./api.js";
import { openStream } from "./sse.js";
import { applyDeliveries, applyDelivery, approvalInbox, dropNotice, feed, initialState, markResolved, pushNotice, } from "./store.js";
export class ConsoleSession {
    api;
    state = initialState();
    profile = null;
    circles = [];
    tasks = [];
    types = {};
    cursor = 0;
    streamStatus = "closed";
    stream = null;
    listeners = new Set();
    pendingAck = 0;
    constructor(api) {
        this.api = api;
    }
    subscribe(listener) {
        this.listeners.add(listener);
        return () => this.listeners.delete(listener);
    }
    emit() {
        for (const listener of this.listeners)
            listener();
    }
    setState(next) {
        if (next !== this.state) {
            this.state = next;
            this.emit();
        }
    }
    /** Login: profile, full mailbox backlog, then the live stream. */
    async start() {
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
    stop() {
        this.stream?.stop();
        this.stream = null;
    }
    onDelivery(delivery) {
        this.setState(applyDelivery(this.state, delivery));
        void this.ackThrough(delivery.seq);
        // A task-change notice means our task snapshots are stale.
        if (delivery.body.payload.attachment?.["kind"] === "task_change") {
            void this.refreshTasks();
        }
    }
    /** Acks advance the server cursor; failures queue for the next attempt. */
    async ackThrough(seq) {
        const target = Math.max(seq, this.pendingAck);
        if (target <= this.cursor)
            return;
        try {
            const acked = await this.api.ack(target);
            this.cursor = acked.cursor;
            this.pendingAck = 0;
        }
        catch {
            this.pendingAck = target; // offline: queue, never fabricate
        }
        this.emit();
    }
    async refreshDirectory() {
        this.circles = (await this.api.circles()).circles;
        this.types = (await this.api.types()).types;
        await this.refreshTasks();
    }
    async refreshTasks() {
        if (!this.profile)
            return;
        if (this.profile.role === "EndUser") {
            this.tasks = (await this.api.tasks()).tasks;
        }
        else {
            const byId = new Map();
            for (const circle of this.circles) {
                for (const task of (await this.api.tasks({ circle: circle.id })).tasks) {
                    byId.set(task.id, task);
                }
            }
            this.tasks = [...byId.values()].sort((a, b) => a.id.localeCompare(b.id));
        }
        this.emit();
    }
    inbox() {
        return approvalInbox(this.state);
    }
    feed() {
        return feed(this.state);
    }
    notice(text) {
        this.setState(pushNotice(this.state, text));
    }
    dismissNotice(index) {
        this.setState(dropNotice(this.state, index));
    }
    /** OK/Reject click. Duplicate or closed sessions surface as notices. */
    async respond(notificationId, verdict) {
        try {
            const session = await this.api.respondApproval(notificationId, verdict);
            this.setState(markResolved(this.state, notificationId, session.outcome));
        }
        catch (error) {
            if (error instanceof ApiError && error.status === 409) {
                this.setState(pushNotice(markResolved(this.state, notificationId, error.code), `${notificationId}: ${error.code}`));
            }
            else {
                this.notice(error instanceof Error ? error.message : String(error));
            }
        }
    }
    async compose(circle, typeCode, text) {
        try {
            const outcome = await this.api.submitNotification(circle, typeCode, { text });
            this.notice(`${outcome.notification_id} ${outcome.state}`);
        }
        catch (error) {
            this.notice(error instanceof Error ? error.message : String(error));
        }
    }
    async saveTask(taskId, diff, notifyPatient) {
        try {
            await this.api.changeTask(taskId, diff, notifyPatient);
            await this.refreshTasks();
        }
        catch (error) {
            if (error instanceof ApiError && error.status === 409) {
                this.notice(`task ${taskId}: ${error.code}; reloading latest`);
                await this.refreshTasks();
            }
            else {
                this.notice(error instanceof Error ? error.message : String(error));
            }
        }
    }
    async report(taskId, metrics) {
        try {
            await this.api.reportProgress(taskId, metrics);
            await this.refreshTasks();
        }
        catch (error) {
            this.notice(error instanceof Error ? error.message : String(error));
        }
    }
    async reachGoal(taskId, label) {
        try {
            await this.api.goalReached(taskId, label);
            await this.refreshTasks();
        }
        catch (error) {
            if (error instanceof ApiError && error.status === 409) {
                this.notice(`goal ${label}: ${error.code}`);
                await this.refreshTasks();
            }
            else {
                this.notice(error instanceof Error ? error.message : String(error));
            }
        }
    }
}
