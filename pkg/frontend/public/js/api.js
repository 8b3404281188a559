// Thin typed client over the coordination API. Every command carries a
// fresh idempotency key, so an impatient double-click can never double-send.
export class ApiError extends Error {
    status;
    code;
    constructor(status, code, message) {
        super(message);
        this.status = status;
        this.code = code;
    }
}
function freshKey() {
    return typeof crypto !== "undefined" && "randomUUID" in crypto
        ? crypto.randomUUID()
        : `k-${Date.now()}-${Math.random().toString(36).slice(2)}`;
}
export class ApiClient {
    base;
    token;
    constructor(base, token) {
        this.base = base;
        this.token = token;
    }
    async request(method, path, body) {
        const headers = {
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
            throw new ApiError(response.status, parsed.code ?? `HTTP${response.status}`, parsed.message ?? text);
        }
        return parsed;
    }
    get(path) {
        return this.request("GET", path);
    }
    me() {
        return this.get("/me");
    }
    participant(id) {
        return this.get(`/participants/${id}`);
    }
    circles() {
        return this.get("/circles");
    }
    types() {
        return this.get("/types");
    }
    poll(afterSeq, maxBatch = 100) {
        return this.get(`/mailbox?after_seq=${afterSeq}&max_batch=${maxBatch}`);
    }
    async fullMailbox() {
        const all = [];
        let after = 0;
        for (;;) {
            const page = await this.poll(after, 200);
            all.push(...page.deliveries);
            if (page.count < 200)
                return all;
            after = page.deliveries[page.deliveries.length - 1].seq;
        }
    }
    ack(upToSeq) {
        return this.request("POST", "/mailbox/ack", { up_to_seq: upToSeq });
    }
    submitNotification(circle, typeCode, payload) {
        return this.request("POST", "/notifications", {
            circle,
            payload,
            type_code: typeCode,
        });
    }
    respondApproval(notificationId, verdict) {
        return this.request("POST", `/notifications/${notificationId}/approvals`, { verdict });
    }
    notification(id) {
        return this.get(`/notifications/${id}`);
    }
    tasks(params = {}) {
        const query = new URLSearchParams();
        if (params.circle)
            query.set("circle", params.circle);
        if (params.patient)
            query.set("patient", params.patient);
        const suffix = query.toString();
        return this.get(`/tasks${suffix ? `?${suffix}` : ""}`);
    }
    createTask(body) {
        return this.request("POST", "/tasks", body);
    }
    changeTask(taskId, diff, notifyPatient) {
        return this.request("PATCH", `/tasks/${taskId}`, {
            diff,
            notify_patient: notifyPatient,
        });
    }
    reportProgress(taskId, metrics) {
        return this.request("POST", `/tasks/${taskId}/reports`, { metrics });
    }
    goalReached(taskId, label) {
        return this.request("POST", `/tasks/${taskId}/goals/${encodeURIComponent(label)}/reached`, {});
    }
}
