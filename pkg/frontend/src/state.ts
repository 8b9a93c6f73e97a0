// URL-encoded view state: every console view is shareable and reloads into
// the same configuration.

export interface ViewState {
  seed: number;
  patients: number;
  costStructure: string;
  lambda: number;
  alpha: number;
  delta: number;
  scenarioSeed: number;
  cursor: number;
  method: string;
  ne: number;
}

export const PATIENT_CHOICES = [70, 100, 140, 200];
export const LAMBDA_CHOICES = [0, 1, 2, 3, 4];
export const ALPHA_CHOICES = [0.6, 0.7, 0.8, 0.9];
export const DELTA_CHOICES = [60, 120, 1000];
export const COST_STRUCTURES = ["cs1", "cs2", "cs3", "cs4", "cs5", "cs6"];
export const METHODS = ["smb2ss", "det", "firstfit"];

export const DEFAULT_STATE: ViewState = {
  seed: 1,
  patients: 70,
  costStructure: "cs3",
  lambda: 1,
  alpha: 0.7,
  delta: 1000,
  scenarioSeed: 1,
  cursor: 0,
  method: "smb2ss",
  ne: 5,
};

function pick<T>(value: T, choices: T[], fallback: T): T {
  return choices.includes(value) ? value : fallback;
}

export function decodeState(query: string): ViewState {
  const params = new URLSearchParams(query);
  const num = (key: string, fallback: number) => {
    const raw = params.get(key);
    if (raw === null) return fallback;
    const value = Number(raw);
    return Number.isFinite(value) ? value : fallback;
  };
  const str = (key: string, fallback: string) => params.get(key) ?? fallback;
  return {
    seed: Math.max(1, Math.round(num("seed", DEFAULT_STATE.seed))),
    patients: pick(num("n", DEFAULT_STATE.patients), PATIENT_CHOICES, DEFAULT_STATE.patients),
    costStructure: pick(str("cs", DEFAULT_STATE.costStructure), COST_STRUCTURES,
                        DEFAULT_STATE.costStructure),
    lambda: pick(num("lambda", DEFAULT_STATE.lambda), LAMBDA_CHOICES, DEFAULT_STATE.lambda),
    alpha: pick(num("alpha", DEFAULT_STATE.alpha), ALPHA_CHOICES, DEFAULT_STATE.alpha),
    delta: pick(num("delta", DEFAULT_STATE.delta), DELTA_CHOICES, DEFAULT_STATE.delta),
    scenarioSeed: Math.max(1, Math.round(num("scenario", DEFAULT_STATE.scenarioSeed))),
    cursor: Math.max(0, num("cursor", DEFAULT_STATE.cursor)),
    method: pick(str("method", DEFAULT_STATE.method), METHODS, DEFAULT_STATE.method),
    ne: Math.max(0, Math.round(num("ne", DEFAULT_STATE.ne))),
  };
}

export function encodeState(state: ViewState): string {
  const params = new URLSearchParams();
  params.set("seed", String(state.seed));
  params.set("n", String(state.patients));
  params.set("cs", state.costStructure);
  params.set("lambda", String(state.lambda));
  params.set("alpha", String(state.alpha));
  params.set("delta", String(state.delta));
  params.set("scenario", String(state.scenarioSeed));
  params.set("cursor", String(state.cursor));
  params.set("method", state.method);
  params.set("ne", String(state.ne));
  return params.toString();
}
