/** Wire shapes of the supervision API, mirrored field for field. */

export interface TelemetryRow {
  house: number;
  flock_id: number;
  day: number;
  t_min: number;
  t_avg: number;
  t_max: number;
  h_min: number;
  h_avg: number;
  h_max: number;
  mdw: number;
  dfc: number;
  dm: number;
  nlb: number;
  recorded_at?: string;
}

export interface HouseCard {
  address: number;
  flock_id: number;
  day: number;
  finished: boolean;
  nlb: number;
  telemetry: TelemetryRow | null;
}

export interface MortalityReceipt {
  flock_id: number;
  house: number;
  day: number;
  count: number;
  nlb: number;
  nlb_projected: number;
}

export interface PlanDay {
  day: number;
  t_min: number;
  t_avg: number;
  t_max: number;
  h_min: number;
  h_avg: number;
  h_max: number;
}

export interface CurrentPlan {
  fcr_est: number | null;
  fcr_res: number | null;
  source: string | null;
  days: PlanDay[];
}

export type JobStatus = "queued" | "running" | "done" | "failed";

export interface JobDoc {
  job: string;
  kind: string;
  status: JobStatus;
  progress: number;
  result: Record<string, unknown> | null;
  error: string | null;
  created_at: string;
  finished_at: string | null;
}

export interface HouseAck {
  house: number;
  ok: boolean;
  retries: number;
  error: string | null;
}

export interface Distribution {
  day: number;
  all_ok: boolean;
  acks: HouseAck[];
}

export interface ApprovalReceipt {
  plan: { fcr_est: number | null; fcr_res: number | null };
  distribution: Distribution | null;
}

export interface AlarmRow {
  id: number;
  at: string;
  house: number;
  variable: string;
  value: number;
  rule_id: string;
  severity: string;
  message: string;
}

export interface ReportSeriesRow {
  day: number;
  mdw: number;
  dfcpb: number;
  nlbpa: number;
  dm: number;
  nlb: number;
  dfc: number;
  fcr: number;
}

export interface MortalityLogRow {
  id?: number;
  flock_id: number;
  house: number;
  day: number;
  count: number;
  operator: string;
}

export interface FlockReport {
  flock_id: number;
  status: string;
  house: number | null;
  days: number;
  series: ReportSeriesRow[];
  fcr: number | null;
  mortality_entries: MortalityLogRow[];
  plan: { fcr_est: number | null; fcr_res: number | null } | null;
}
