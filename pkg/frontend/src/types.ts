// Wire types mirroring the coordination service's canonical JSON shapes.

export type Role = "Expert" | "EndUser";

export type DeliveryKind =
  | "Direct"
  | "ApprovalRequest"
  | "ApprovalResult"
  | "RejectionNotice";

export interface Payload {
  text: string;
  attachment?: Record<string, unknown>;
}

export interface DeliveryBody {
  circle: string;
  payload: Payload;
  sender: string;
  type_code: string;
  outcome?: string;
  rejected_by?: string;
}

export interface Delivery {
  body: DeliveryBody;
  delivery_id: string;
  kind: DeliveryKind;
  mailbox: string;
  notification_id: string;
  seq: number;
}

export interface Participant {
  id: string;
  role: Role;
  display_name: string;
  domain?: string;
  active: boolean;
}

export interface Circle {
  id: string;
  experts: string[];
  patients: string[];
}

export interface Goal {
  label: string;
  target: string;
  reached: boolean;
}

export interface Schedule {
  text?: string;
  start?: number;
  end?: number;
}

export interface TaskReport {
  metrics: Record<string, string | number>;
  report_index: number;
  seq: number;
}

export interface Task {
  id: string;
  patient: string;
  created_by: string;
  circle: string;
  domain?: string;
  instructions: string[];
  schedule?: Schedule;
  goals: Goal[];
  status: "Active" | "Completed" | "Withdrawn";
  version: number;
  reports: TaskReport[];
}

export interface MailboxPage {
  count: number;
  cursor: number;
  deliveries: Delivery[];
  head: number;
}

export interface NotificationView {
  id: string;
  circle: string;
  sender: string;
  type_code: string;
  state: string;
  created_at: number;
  payload: Payload;
  session?: {
    notification_id: string;
    outcome: "Open" | "AllApproved" | "Rejected";
    required_approvers: string[];
    verdicts: Record<string, "Pending" | "OK" | "Reject">;
  };
}

export interface TypeSpec {
  code: string;
  origin_role: Role;
  audience: "OtherExperts" | "Patient" | "AllExperts";
  requires_approval: boolean;
  patient_visible: boolean;
}

export interface RoutingOutcome {
  delivery_count: number;
  notification_id: string;
  state: string;
}
