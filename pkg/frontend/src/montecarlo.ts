// Monte Carlo view: one stacked bar per scenario ordered by total cost, plus
// the patient-status histogram.  The UI never recomputes costs; bars carry a
// consistency flag comparing the component sum with the reported total.

import type { CostBreakdown, EvalReport } from "./types.js";

export const COMPONENTS = [
  "scheduling",
  "waiting",
  "idle",
  "overtime",
  "migration",
] as const;

export type ComponentKey = (typeof COMPONENTS)[number];

export interface McBar {
  scenario: number; // original scenario index
  total: number;
  parts: { key: ComponentKey; value: number }[];
  consistent: boolean;
}

export interface MonteCarloModel {
  bars: McBar[];
  meanTotal: number;
  medianTotal: number;
  statuses: { key: string; value: number }[];
}

const ROUNDING = 1e-6;

export function buildMonteCarloView(report: EvalReport): MonteCarloModel {
  const bars = report.per_scenario
    .map((costs: CostBreakdown, index: number) => {
      const parts = COMPONENTS.map((key) => ({ key, value: costs[key] }));
      const sum = parts.reduce((acc, part) => acc + part.value, 0);
      return {
        scenario: index,
        total: costs.total,
        parts,
        consistent: Math.abs(sum - costs.total) <= ROUNDING * Math.max(1, costs.total),
      };
    })
    .sort((a, b) => a.total - b.total || a.scenario - b.scenario);
  const statuses = Object.entries(report.status_counts)
    .map(([key, value]) => ({ key, value }))
    .sort((a, b) => a.key.localeCompare(b.key));
  return {
    bars,
    meanTotal: report.mean.total,
    medianTotal: report.median_total,
    statuses,
  };
}

const COLORS: Record<ComponentKey, string> = {
  scheduling: "#4f81bd",
  waiting: "#f79646",
  idle: "#9bbb59",
  overtime: "#c0504d",
  migration: "#8064a2",
};

/** Deterministic SVG of the stacked per-scenario bars. */
export function renderMonteCarlo(model: MonteCarloModel, width = 720, height = 220): string {
  const maxTotal = model.bars.reduce((acc, bar) => Math.max(acc, bar.total), 0) || 1;
  const barWidth = Math.max((width - 60) / Math.max(model.bars.length, 1), 1);
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}" font-family="sans-serif" font-size="10">`,
  );
  model.bars.forEach((bar, i) => {
    let y = height - 20;
    const bx = 40 + i * barWidth;
    for (const part of bar.parts) {
      const h = ((height - 40) * part.value) / maxTotal;
      y -= h;
      parts.push(
        `<rect x="${bx.toFixed(2)}" y="${y.toFixed(2)}" width="${Math.max(barWidth - 0.5, 0.5).toFixed(2)}" ` +
        `height="${h.toFixed(2)}" fill="${COLORS[part.key]}">` +
        `<title>scenario ${bar.scenario}: ${part.key} ${part.value.toFixed(1)}</title></rect>`,
      );
    }
    if (!bar.consistent) {
      parts.push(`<text x="${bx.toFixed(2)}" y="12" fill="red">!</text>`);
    }
  });
  parts.push(
    `<text x="40" y="${height - 4}" fill="#333">mean ${model.meanTotal.toFixed(1)}, ` +
    `median ${model.medianTotal.toFixed(1)}</text>`,
  );
  parts.push("</svg>");
  return parts.join("");
}

/** Patient-status histogram (scheduled / postponed / rescheduled / ...). */
export function renderStatusHistogram(model: MonteCarloModel, width = 360, height = 160): string {
  const max = model.statuses.reduce((acc, s) => Math.max(acc, s.value), 0) || 1;
  const barWidth = (width - 40) / Math.max(model.statuses.length, 1);
  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}" font-family="sans-serif" font-size="9">`,
  ];
  model.statuses.forEach((status, i) => {
    const h = ((height - 50) * status.value) / max;
    const bx = 20 + i * barWidth;
    parts.push(
      `<rect x="${bx.toFixed(2)}" y="${(height - 30 - h).toFixed(2)}" ` +
      `width="${(barWidth - 6).toFixed(2)}" height="${h.toFixed(2)}" fill="#4f81bd"/>`,
    );
    parts.push(
      `<text x="${bx.toFixed(2)}" y="${height - 18}" fill="#333">${status.key}</text>`,
    );
    parts.push(
      `<text x="${bx.toFixed(2)}" y="${(height - 34 - h).toFixed(2)}" fill="#333">` +
      `${status.value.toFixed(1)}</text>`,
    );
  });
  parts.push("</svg>");
  return parts.join("");
}
