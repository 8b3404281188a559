// Console state is a pure function of API snapshots and stream deliveries.
// Every transition returns a new state object; deliveries deduplicate by
// delivery_id, so replaying a duplicate is a no-op by construction.
export function initialState() {
    return { byId: {}, order: [], lastSeq: 0, resolved: {}, notices: [] };
}
export function applyDelivery(state, delivery) {
    if (state.byId[delivery.delivery_id])
        return state;
    const byId = { ...state.byId, [delivery.delivery_id]: delivery };
    const order = [...state.order, delivery.delivery_id].sort((a, b) => byId[a].seq - byId[b].seq);
    const resolved = delivery.kind === "ApprovalResult" || delivery.kind === "RejectionNotice"
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
export function applyDeliveries(state, deliveries) {
    return deliveries.reduce(applyDelivery, state);
}
/** Mark an approval request locally handled (we clicked, or saw it close). */
export function markResolved(state, notificationId, outcome) {
    if (state.resolved[notificationId] === outcome)
        return state;
    return { ...state, resolved: { ...state.resolved, [notificationId]: outcome } };
}
export function pushNotice(state, text) {
    return { ...state, notices: [...state.notices, text] };
}
export function dropNotice(state, index) {
    return { ...state, notices: state.notices.filter((_, i) => i !== index) };
}
const bySeq = (state) => state.order.map((id) => state.byId[id]);
/** Open approval requests: what an expert still needs to answer. */
export function approvalInbox(state) {
    return bySeq(state).filter((d) => d.kind === "ApprovalRequest" && !(d.notification_id in state.resolved));
}
/** Everything renderable as a feed entry (requests live in the inbox). */
export function feed(state) {
    return bySeq(state).filter((d) => d.kind !== "ApprovalRequest");
}
export function unread(state, cursor) {
    return bySeq(state).filter((d) => d.seq > cursor).length;
}
