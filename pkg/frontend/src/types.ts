// Payload shapes of the planning service API.

export interface CostBreakdown {
  scheduling: number;
  waiting: number;
  idle: number;
  overtime: number;
  migration: number;
  total: number;
}

export interface TraceEvent {
  time: number; // global minutes (day * day_minutes + clock)
  day: number;
  kind: string; // released | start | start_emergency | complete | rescheduled | canceled
  patient?: number;
  emergency?: string;
  surgery?: number | string;
  block?: string;
  from_block?: string;
  to_block?: string | null;
  duration?: number;
  tentative?: number | null;
}

export interface SnapshotSegment {
  id: number | string;
  kind: "elective" | "emergency";
  start: number; // minutes within the snapshot's day
  end: number;
  status: "ongoing" | "projected";
  tentative?: number;
}

export interface Snapshot {
  time: number;
  day: number;
  clock: number;
  blocks: Record<string, SnapshotSegment[]>;
  estimated_load: Record<string, number>;
}

export interface SimulationTrace {
  events: TraceEvent[];
  snapshots: Snapshot[];
  params: { delta: number; alpha: number };
}

export interface PlannedOp {
  id: number;
  block: string;
  day: number;
  kind: string;
  start: number;
  end: number;
  tentative: number;
  specialty: string;
}

export interface SimulationOutcome {
  final_block: Record<string, string | null>;
  final_tentative: Record<string, number>;
  start: Record<string, number>;
  migrations: Record<string, number>;
  load: Record<string, number>;
  cost_breakdown: CostBreakdown;
  emergency_ops: Record<string, { block: string; start: number; duration: number }>;
}

export interface SimulationResponse {
  id: string;
  plan_id: string;
  instance_id: string;
  scenario_seed: number;
  params: { delta: number; alpha: number };
  outcome: SimulationOutcome;
  trace: SimulationTrace;
  planned_layout: PlannedOp[];
  horizon: number[];
  day_minutes: number;
  regular_time: number;
}

export interface EvalReport {
  per_scenario: CostBreakdown[];
  mean: CostBreakdown;
  median_total: number;
  quantiles: Record<string, number>;
  status_counts: Record<string, number>;
  migrations_per_scenario: number[];
  planner: Record<string, unknown>;
}

export interface MonteCarloResponse {
  id: string;
  plan_id: string;
  report: EvalReport;
}

export interface JobRecord {
  id: string;
  kind: string;
  status: "queued" | "running" | "done" | "failed";
  result_id: string | null;
  error: string | null;
}
