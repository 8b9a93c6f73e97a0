// Console bootstrap: dropdowns for the instance and policy parameters, a
// plan/simulate/Monte Carlo pipeline, and a time cursor that re-renders the
// Gantt purely from the cached trace.

import {
  createInstance,
  createPlan,
  runMonteCarlo,
  simulate,
  waitForJob,
} from "./api.js";
import { buildGantt, renderGantt } from "./gantt.js";
import {
  buildMonteCarloView,
  renderMonteCarlo,
  renderStatusHistogram,
} from "./montecarlo.js";
import {
  ALPHA_CHOICES,
  COST_STRUCTURES,
  DELTA_CHOICES,
  LAMBDA_CHOICES,
  METHODS,
  PATIENT_CHOICES,
  decodeState,
  encodeState,
  type ViewState,
} from "./state.js";
import type { MonteCarloResponse, SimulationResponse } from "./types.js";

let state: ViewState = decodeState(window.location.search);
let planId: string | null = null;
let cachedSimulation: SimulationResponse | null = null;
let cachedReport: MonteCarloResponse | null = null;

function byId<T extends HTMLElement>(id: string): T {
  const element = document.getElementById(id);
  if (!element) throw new Error(`missing element #${id}`);
  return element as T;
}

function fillSelect(id: string, values: (string | number)[], current: string | number): void {
  const select = byId<HTMLSelectElement>(id);
  select.innerHTML = "";
  for (const value of values) {
    const option = document.createElement("option");
    option.value = String(value);
    option.textContent = String(value);
    if (String(value) === String(current)) option.selected = true;
    select.appendChild(option);
  }
}

function syncUrl(): void {
  const query = encodeState(state);
  window.history.replaceState(null, "", `?${query}`);
}

function setStatus(text: string): void {
  byId<HTMLElement>("status").textContent = text;
}

function renderCursorView(): void {
  if (!cachedSimulation) return;
  const model = buildGantt(cachedSimulation, state.cursor);
  byId<HTMLElement>("gantt").innerHTML = renderGantt(model);
  const total = cachedSimulation.outcome.cost_breakdown.total;
  byId<HTMLElement>("scenario-cost").textContent =
    `scenario total cost: ${total.toFixed(1)} (final outcome)`;
}

function renderMonteCarloView(): void {
  if (!cachedReport) return;
  const model = buildMonteCarloView(cachedReport.report);
  byId<HTMLElement>("montecarlo").innerHTML = renderMonteCarlo(model);
  byId<HTMLElement>("histogram").innerHTML = renderStatusHistogram(model);
}

async function optimize(): Promise<void> {
  setStatus("generating instance...");
  const instance = await createInstance({
    seed: state.seed,
    n_patients: state.patients,
    rate: state.lambda,
    cost_structure: state.costStructure,
  });
  setStatus("planning...");
  const job = await createPlan(instance.id, state.method, state.ne);
  await waitForJob(job.job_id);
  planId = job.job_id;
  setStatus("planned; simulating scenario...");
  await runScenario();
}

async function runScenario(): Promise<void> {
  if (!planId) return;
  cachedSimulation = await simulate(planId, state.scenarioSeed, state.delta, state.alpha);
  const slider = byId<HTMLInputElement>("cursor");
  const horizonEnd =
    (Math.max(...cachedSimulation.horizon) + 1) * cachedSimulation.day_minutes;
  slider.max = String(horizonEnd);
  renderCursorView();
  setStatus("ready");
}

async function monteCarlo(): Promise<void> {
  if (!planId) {
    setStatus("optimize an assignment first");
    return;
  }
  setStatus("running Monte Carlo...");
  cachedReport = await runMonteCarlo(planId, 200, state.delta, state.alpha);
  renderMonteCarloView();
  setStatus("ready");
}

function bind(): void {
  fillSelect("seed", [1, 2, 3, 4, 5, 6, 7, 8, 9, 10], state.seed);
  fillSelect("patients", PATIENT_CHOICES, state.patients);
  fillSelect("cs", COST_STRUCTURES, state.costStructure);
  fillSelect("lambda", LAMBDA_CHOICES, state.lambda);
  fillSelect("alpha", ALPHA_CHOICES, state.alpha);
  fillSelect("delta", DELTA_CHOICES, state.delta);
  fillSelect("method", METHODS, state.method);
  fillSelect("scenario-seed", [1, 2, 3, 4, 5, 6, 7, 8, 9, 10], state.scenarioSeed);

  const onChange = (id: string, apply: (value: string) => void) => {
    byId<HTMLSelectElement>(id).addEventListener("change", (event) => {
      apply((event.target as HTMLSelectElement).value);
      syncUrl();
    });
  };
  onChange("seed", (v) => (state.seed = Number(v)));
  onChange("patients", (v) => (state.patients = Number(v)));
  onChange("cs", (v) => (state.costStructure = v));
  onChange("lambda", (v) => (state.lambda = Number(v)));
  onChange("alpha", (v) => (state.alpha = Number(v)));
  onChange("delta", (v) => (state.delta = Number(v)));
  onChange("method", (v) => (state.method = v));
  onChange("scenario-seed", (v) => (state.scenarioSeed = Number(v)));

  byId<HTMLInputElement>("cursor").addEventListener("input", (event) => {
    state.cursor = Number((event.target as HTMLInputElement).value);
    syncUrl();
    renderCursorView(); // cached trace only; no network per cursor move
  });
  byId<HTMLButtonElement>("optimize").addEventListener("click", () => {
    optimize().catch((error) => setStatus(`error: ${error}`));
  });
  byId<HTMLButtonElement>("resimulate").addEventListener("click", () => {
    runScenario().catch((error) => setStatus(`error: ${error}`));
  });
  byId<HTMLButtonElement>("montecarlo-run").addEventListener("click", () => {
    monteCarlo().catch((error) => setStatus(`error: ${error}`));
  });
  byId<HTMLInputElement>("cursor").value = String(state.cursor);
  syncUrl();
}

bind();
