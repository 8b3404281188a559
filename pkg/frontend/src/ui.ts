// Plain DOM rendering. The whole view re-renders from the session on every
// state change; no widget holds state of its own.

import type { ConsoleSession } from "./controller.js";
import type { Delivery, Task } from "./types.js";

type Child = Node | string | null | undefined;

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | ((event: Event) => void)> = {},
  ...children: Child[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (typeof value === "function") {
      node.addEventListener(key.replace(/^on/, ""), value);
    } else if (key === "class") {
      node.className = value;
    } else {
      node.setAttribute(key, value);
    }
  }
  for (const child of children) {
    if (child == null) continue;
    node.append(child instanceof Node ? child : document.createTextNode(child));
  }
  return node;
}

function describeDelivery(d: Delivery): string {
  const attachment = d.body.payload.attachment;
  const kind = attachment?.["kind"];
  if (d.kind === "ApprovalResult") return `Approved and delivered: "${d.body.payload.text}"`;
  if (d.kind === "RejectionNotice")
    return `Rejected by ${d.body.rejected_by}: "${d.body.payload.text}"`;
  if (kind === "task_change") return `Task ${attachment?.["task_id"]} updated`;
  if (kind === "progress_report") return `Progress on task ${attachment?.["task_id"]}`;
  if (kind === "goal_reached")
    return `Goal "${attachment?.["label"]}" reached on task ${attachment?.["task_id"]}`;
  return d.body.payload.text;
}

function noticeBar(session: ConsoleSession): HTMLElement {
  return el(
    "div",
    { class: "notices" },
    ...session.state.notices.map((text, index) =>
      el(
        "div",
        { class: "notice" },
        text,
        el("button", { class: "dismiss", onclick: () => session.dismissNotice(index) }, "x"),
      ),
    ),
  );
}

function feedSection(session: ConsoleSession, title: string): HTMLElement {
  const entries = session.feed().slice().reverse();
  return el(
    "section",
    {},
    el("h2", {}, `${title} (${entries.length})`),
    el(
      "ul",
      { class: "feed" },
      ...entries.map((d) =>
        el(
          "li",
          { class: `entry kind-${d.kind}` },
          el("span", { class: "badge" }, d.body.type_code),
          ` #${d.seq} from ${d.body.sender}: ${describeDelivery(d)}`,
        ),
      ),
    ),
  );
}

function approvalSection(session: ConsoleSession): HTMLElement {
  const pending = session.inbox();
  return el(
    "section",
    {},
    el("h2", {}, `Approval inbox (${pending.length})`),
    pending.length === 0 ? el("p", { class: "muted" }, "Nothing waiting on you.") : null,
    el(
      "ul",
      { class: "inbox" },
      ...pending.map((d) =>
        el(
          "li",
          { class: "entry" },
          el("span", { class: "badge" }, d.body.type_code),
          ` ${d.body.sender} proposes: "${d.body.payload.text}" `,
          el(
            "button",
            { class: "ok", onclick: () => void session.respond(d.notification_id, "OK") },
            "OK",
          ),
          el(
            "button",
            { class: "reject", onclick: () => void session.respond(d.notification_id, "Reject") },
            "Reject",
          ),
        ),
      ),
    ),
  );
}

function composeSection(session: ConsoleSession): HTMLElement {
  const circleInput = el("select", { id: "compose-circle" });
  for (const circle of session.circles) {
    circleInput.append(el("option", { value: circle.id }, circle.id));
  }
  const typeInput = el("select", { id: "compose-type" });
  for (const [code, spec] of Object.entries(session.types)) {
    if (spec.origin_role === session.profile?.role) {
      typeInput.append(el("option", { value: code }, code));
    }
  }
  const textInput = el("input", { type: "text", placeholder: "message" });
  return el(
    "section",
    {},
    el("h2", {}, "Compose"),
    el(
      "form",
      {
        class: "row",
        onsubmit: (event) => {
          event.preventDefault();
          if (circleInput.value && textInput.value) {
            void session.compose(circleInput.value, typeInput.value, textInput.value);
            textInput.value = "";
          }
        },
      },
      circleInput,
      typeInput,
      textInput,
      el("button", { type: "submit" }, "Send"),
    ),
  );
}

function taskEditor(session: ConsoleSession, task: Task): HTMLElement {
  const instructions = el("textarea", { rows: "4" });
  instructions.value = task.instructions.join("\n");
  const schedule = el("input", { type: "text", placeholder: "schedule" });
  schedule.value = task.schedule?.text ?? "";
  const notify = el("input", { type: "checkbox", checked: "checked" }); // notify is the safe default
  return el(
    "details",
    { class: "task" },
    el(
      "summary",
      {},
      `${task.id} v${task.version} for ${task.patient} [${task.status}]`,
    ),
    el("label", {}, "Instructions (one per line)", instructions),
    el("label", {}, "Schedule", schedule),
    el("label", { class: "row" }, notify, "Notify the patient of this change"),
    el(
      "button",
      {
        onclick: () => {
          const diff: Record<string, unknown> = {
            instructions: instructions.value.split("\n").filter((line) => line.trim()),
          };
          if (schedule.value.trim()) diff["schedule"] = { text: schedule.value.trim() };
          void session.saveTask(task.id, diff, notify.checked);
        },
      },
      "Save change",
    ),
  );
}

function expertTasks(session: ConsoleSession): HTMLElement {
  return el(
    "section",
    {},
    el("h2", {}, `Tasks (${session.tasks.length})`),
    ...session.tasks.map((task) => taskEditor(session, task)),
  );
}

function patientTasks(session: ConsoleSession): HTMLElement {
  return el(
    "section",
    {},
    el("h2", {}, `My tasks (${session.tasks.length})`),
    ...session.tasks.map((task) => {
      const metricName = el("input", { type: "text", placeholder: "metric" });
      const metricValue = el("input", { type: "text", placeholder: "value" });
      return el(
        "div",
        { class: "task" },
        el("h3", {}, `${task.id} v${task.version} [${task.status}]`),
        el("ol", {}, ...task.instructions.map((line) => el("li", {}, line))),
        task.schedule?.text ? el("p", { class: "muted" }, `Schedule: ${task.schedule.text}`) : null,
        el(
          "ul",
          { class: "goals" },
          ...task.goals.map((goal) =>
            el(
              "li",
              {},
              `${goal.label}: ${goal.target} `,
              goal.reached
                ? el("span", { class: "badge done" }, "reached")
                : el(
                    "button",
                    { onclick: () => void session.reachGoal(task.id, goal.label) },
                    "Mark reached",
                  ),
            ),
          ),
        ),
        el(
          "form",
          {
            class: "row",
            onsubmit: (event) => {
              event.preventDefault();
              const name = metricName.value.trim();
              if (!name) return;
              const raw = metricValue.value.trim();
              const numeric = Number(raw);
              void session.report(task.id, {
                [name]: raw !== "" && !Number.isNaN(numeric) ? numeric : raw,
              });
              metricName.value = "";
              metricValue.value = "";
            },
          },
          metricName,
          metricValue,
          el("button", { type: "submit" }, "Report progress"),
        ),
      );
    }),
  );
}

export function render(root: HTMLElement, session: ConsoleSession): void {
  const profile = session.profile;
  if (!profile) return;
  const isExpert = profile.role === "Expert";
  root.replaceChildren(
    el(
      "header",
      {},
      el("h1", {}, "caremesh console"),
      el(
        "p",
        {},
        `${profile.display_name} (${profile.id}) — ` +
          (isExpert ? `expert, ${profile.domain}` : "patient") +
          ` — stream: ${session.streamStatus}`,
      ),
    ),
    noticeBar(session),
    ...(isExpert
      ? [
          approvalSection(session),
          composeSection(session),
          expertTasks(session),
          feedSection(session, "Team feed"),
        ]
      : [patientTasks(session), feedSection(session, "My feed")]),
  );
}
