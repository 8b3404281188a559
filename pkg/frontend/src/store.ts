// Console state is a pure function of API snapshots and stream deliveries.
// Every transition returns a new state object; deliveries deduplicate by
// delivery_id, so replaying a duplicate is a no-op by construction.

import type { Delivery } from "./types.js";

export interface ConsoleState {
  byId: Record<string, Delivery>;
  order: string[]; // delivery ids, ascending seq
  lastSeq: number;
  resolved: Record<string, string>; // notification id -> outcome we observed
  notices: string[];
}

export function initialState(): ConsoleState {
  return { byId: {}, order: [], lastSeq: 0, resolved: {}, notices: [] };
}

export function applyDelivery(state: ConsoleState, delivery: Delivery): ConsoleState {
  if (state.byId[delivery.delivery_id]) return state;
  const byId = { ...state.byId, [delivery.delivery_id]: delivery };
  const order = [...state.order, delivery.delivery_id].sort(
    (a, b) => byId[a]!.seq - byId[b]!.seq,
  );
  const resolved =
    delivery.kind === "ApprovalResult" || delivery.kind === "RejectionNotice"
      ? { ...state.resolved, [delivery.notification_id]: delivery.body.outcome ?? "Closed" }
      : state.resolved;
  return {
    ...state,
    byId,
    order,
    resolved,
    lastSeq: Math.max(state.lastSeq, delivery.seq),
  };
}

export function applyDeliveries(state: ConsoleState, deliveries: Delivery[]): ConsoleState {
  return deliveries.reduce(applyDelivery, state);
}

/** Mark an approval request locally handled (we clicked, or saw it close). */
export function markResolved(
  state: ConsoleState,
  notificationId: string,
  outcome: string,
): ConsoleState {
  if (state.resolved[notificationId] === outcome) return state;
  return { ...state, resolved: { ...state.resolved, [notificationId]: outcome } };
}

export function pushNotice(state: ConsoleState, text: string): ConsoleState {
  return { ...state, notices: [...state.notices, text] };
}

export function dropNotice(state: ConsoleState, index: number): ConsoleState {
  return { ...state, notices: state.notices.filter((_, i) => i !== index) };
}

const bySeq = (state: ConsoleState): Delivery[] =>
  state.order.map((id) => state.byId[id]!);

/** Open approval requests: what an expert still needs to answer. */
export function approvalInbox(state: ConsoleState): Delivery[] {
  return bySeq(state).filter(
    (d) => d.kind === "ApprovalRequest" && !(d.notification_id in state.resolved),
  );
}

/** Everything renderable as a feed entry (requests live in the inbox). */
export function feed(state: ConsoleState): Delivery[] {
  return bySeq(state).filter((d) => d.kind !== "ApprovalRequest");
}

export function unread(state: ConsoleState, cursor: number): number {
  return bySeq(state).filter((d) => d.seq > cursor).length;
}
