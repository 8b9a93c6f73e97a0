// Thin fetch client; the UI consumes the planning service exclusively
// through these calls.

import type { JobRecord, MonteCarloResponse, SimulationResponse } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(path, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  if (!response.ok) {
    throw new ApiError(response.status, await response.text());
  }
  return (await response.json()) as T;
}

export interface InstanceParams {
  seed: number;
  n_patients: number;
  rate: number;
  cost_structure: string;
}

export async function createInstance(params: InstanceParams): Promise<{ id: string }> {
  return request("/instances", { method: "POST", body: JSON.stringify(params) });
}

export async function createPlan(
  instanceId: string,
  method: string,
  ne: number,
): Promise<{ job_id: string }> {
  return request("/plans", {
    method: "POST",
    body: JSON.stringify({ instance_id: instanceId, method, n_e: ne }),
  });
}

export async function getJob(jobId: string): Promise<JobRecord> {
  return request(`/jobs/${jobId}`);
}

export async function waitForJob(jobId: string, pollMs = 500): Promise<JobRecord> {
  for (;;) {
    const job = await getJob(jobId);
    if (job.status === "done") return job;
    if (job.status === "failed") throw new ApiError(500, job.error ?? "job failed");
    await new Promise((resolve) => setTimeout(resolve, pollMs));
  }
}

export async function simulate(
  planId: string,
  scenarioSeed: number,
  delta: number,
  alpha: number,
): Promise<SimulationResponse> {
  return request("/simulations", {
    method: "POST",
    body: JSON.stringify({
      plan_id: planId,
      scenario_seed: scenarioSeed,
      delta,
      alpha,
    }),
  });
}

export async function runMonteCarlo(
  planId: string,
  scenarioCount: number,
  delta: number,
  alpha: number,
): Promise<MonteCarloResponse> {
  const started = await request<{ job_id: string }>("/montecarlo", {
    method: "POST",
    body: JSON.stringify({
      plan_id: planId,
      scenario_count: scenarioCount,
      delta,
      alpha,
    }),
  });
  await waitForJob(started.job_id);
  return request(`/montecarlo/${started.job_id}`);
}
