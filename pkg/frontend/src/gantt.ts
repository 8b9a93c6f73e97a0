// Time-cursor Gantt model: realized operations before the cursor, the
// conditional expectation after it (grayed).  All numbers come from the API
// payload; this module only rearranges them.

import type {
  PlannedOp,
  SimulationResponse,
  Snapshot,
  TraceEvent,
} from "./types.js";

export interface GanttSegment {
  id: string;
  kind: "elective" | "emergency";
  start: number; // global minutes
  end: number;
  status: "done" | "ongoing" | "projected";
  grayed: boolean;
}

export interface GanttLane {
  block: string;
  day: number;
  segments: GanttSegment[];
}

export interface GanttModel {
  lanes: GanttLane[];
  cursor: number;
  dayMinutes: number;
  horizon: number[];
}

function blockDays(sim: SimulationResponse): Map<string, number> {
  const days = new Map<string, number>();
  for (const op of sim.planned_layout) days.set(op.block, op.day);
  for (const event of sim.trace.events) {
    if (event.block !== undefined) days.set(event.block, event.day);
    if (event.to_block) {
      // migration targets live on a later day; resolved via snapshots below
      if (!days.has(event.to_block)) days.set(event.to_block, -1);
    }
  }
  for (const snap of sim.trace.snapshots) {
    for (const block of Object.keys(snap.blocks)) days.set(block, snap.day);
  }
  return days;
}

function latestSnapshot(sim: SimulationResponse, day: number, clock: number): Snapshot | null {
  let best: Snapshot | null = null;
  for (const snap of sim.trace.snapshots) {
    if (snap.day !== day || snap.clock > clock + 1e-9) continue;
    if (best === null || snap.clock > best.clock) best = snap;
  }
  return best;
}

function realizedSegments(events: TraceEvent[], upTo: number): Map<string, GanttSegment[]> {
  const perBlock = new Map<string, GanttSegment[]>();
  for (const event of events) {
    if (event.time > upTo + 1e-9) continue;
    if (event.kind !== "start" && event.kind !== "start_emergency") continue;
    const id = event.kind === "start" ? `p${event.patient}` : String(event.emergency);
    const block = event.block as string;
    const duration = event.duration ?? 0;
    const list = perBlock.get(block) ?? [];
    list.push({
      id,
      kind: event.kind === "start" ? "elective" : "emergency",
      start: event.time,
      end: event.time + duration,
      status: event.time + duration <= upTo + 1e-9 ? "done" : "ongoing",
      grayed: false,
    });
    perBlock.set(block, list);
  }
  return perBlock;
}

interface Migration {
  patient: number;
  from: string;
  to: string | null;
  tentative: number | null;
}

function migrationsUpTo(events: TraceEvent[], upTo: number): Migration[] {
  const moves: Migration[] = [];
  for (const event of events) {
    if (event.time > upTo + 1e-9) continue;
    if (event.kind === "rescheduled") {
      moves.push({
        patient: event.patient as number,
        from: event.from_block as string,
        to: event.to_block as string,
        tentative: event.tentative ?? 0,
      });
    } else if (event.kind === "canceled") {
      moves.push({
        patient: event.patient as number,
        from: event.from_block as string,
        to: null,
        tentative: null,
      });
    }
  }
  return moves;
}

/** Planned operations per block after applying migrations seen so far. */
function plannedAfterMigrations(
  sim: SimulationResponse,
  moves: Migration[],
  days: Map<string, number>,
): Map<string, PlannedOp[]> {
  const expected = new Map<number, number>();
  const current = new Map<number, PlannedOp | null>();
  for (const op of sim.planned_layout) {
    expected.set(op.id, op.end - op.start);
    current.set(op.id, op);
  }
  for (const move of moves) {
    const duration = expected.get(move.patient) ?? 0;
    if (move.to === null) {
      current.set(move.patient, null);
      continue;
    }
    const day = days.get(move.to) ?? 0;
    current.set(move.patient, {
      id: move.patient,
      block: move.to,
      day,
      kind: "elective",
      start: move.tentative ?? 0,
      end: (move.tentative ?? 0) + duration,
      tentative: move.tentative ?? 0,
      specialty: "",
    });
  }
  const perBlock = new Map<string, PlannedOp[]>();
  for (const op of current.values()) {
    if (op === null) continue;
    const list = perBlock.get(op.block) ?? [];
    list.push(op);
    perBlock.set(op.block, list);
  }
  for (const list of perBlock.values()) list.sort((a, b) => a.start - b.start || a.id - b.id);
  return perBlock;
}

/**
 * Assemble the Gantt view at a cursor time: past days realized, the cursor
 * day from its conditional snapshot, later days from the migration-adjusted
 * plan.
 */
export function buildGantt(sim: SimulationResponse, cursor: number): GanttModel {
  const dayMinutes = sim.day_minutes;
  const horizonEnd = (Math.max(...sim.horizon) + 1) * dayMinutes;
  const clamped = Math.max(0, Math.min(cursor, horizonEnd));
  const cursorDay = Math.min(Math.floor(clamped / dayMinutes), Math.max(...sim.horizon) + 1);
  const clock = clamped - cursorDay * dayMinutes;

  const days = blockDays(sim);
  const lanes = new Map<string, GanttSegment[]>();
  const addSegment = (block: string, segment: GanttSegment) => {
    const list = lanes.get(block) ?? [];
    list.push(segment);
    lanes.set(block, list);
  };

  // fully realized surgeries (events up to the cursor)
  for (const [block, segments] of realizedSegments(sim.trace.events, clamped)) {
    for (const segment of segments) {
      if (segment.status === "ongoing") continue; // the snapshot carries it
      addSegment(block, segment);
    }
  }

  // the cursor day: conditional expectation from the snapshot grid
  const snap = cursorDay <= Math.max(...sim.horizon)
    ? latestSnapshot(sim, cursorDay, clock)
    : null;
  if (snap !== null) {
    for (const [block, segments] of Object.entries(snap.blocks)) {
      for (const seg of segments) {
        addSegment(block, {
          id: typeof seg.id === "number" ? `p${seg.id}` : String(seg.id),
          kind: seg.kind,
          start: cursorDay * dayMinutes + seg.start,
          end: cursorDay * dayMinutes + seg.end,
          status: seg.status,
          grayed: seg.status === "projected",
        });
      }
    }
  }

  // later days: plan adjusted by migrations observed so far
  const moves = migrationsUpTo(sim.trace.events, clamped);
  for (const [block, ops] of plannedAfterMigrations(sim, moves, days)) {
    const day = days.get(block) ?? 0;
    if (day <= cursorDay) continue;
    for (const op of ops) {
      addSegment(block, {
        id: `p${op.id}`,
        kind: "elective",
        start: day * dayMinutes + op.start,
        end: day * dayMinutes + op.end,
        status: "projected",
        grayed: true,
      });
    }
  }

  const ordered: GanttLane[] = [...lanes.entries()]
    .map(([block, segments]) => ({
      block,
      day: days.get(block) ?? 0,
      segments: segments.sort((a, b) => a.start - b.start || a.id.localeCompare(b.id)),
    }))
    .sort((a, b) => a.day - b.day || a.block.localeCompare(b.block));
  return { lanes: ordered, cursor: clamped, dayMinutes, horizon: sim.horizon };
}

const LANE_HEIGHT = 26;
const LEFT = 90;
const SCALE = 0.18; // px per minute of a day
const DAY_SPAN = 720; // minutes drawn per day

function x(day: number, minute: number, dayMinutes: number): number {
  const within = Math.min(minute - day * dayMinutes, DAY_SPAN);
  return LEFT + (day * DAY_SPAN + within) * SCALE;
}

/** Deterministic SVG rendering of the Gantt model. */
export function renderGantt(model: GanttModel): string {
  const width = LEFT + model.horizon.length * DAY_SPAN * SCALE + 20;
  const height = (model.lanes.length + 1) * LANE_HEIGHT + 30;
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}" font-family="sans-serif" font-size="10">`,
  );
  for (const day of model.horizon) {
    const dx = LEFT + day * DAY_SPAN * SCALE;
    parts.push(`<line x1="${dx}" y1="0" x2="${dx}" y2="${height}" stroke="#ddd"/>`);
    parts.push(`<text x="${dx + 4}" y="12" fill="#555">day ${day + 1}</text>`);
  }
  model.lanes.forEach((lane, row) => {
    const y = 20 + row * LANE_HEIGHT;
    parts.push(`<text x="4" y="${y + 14}" fill="#333">${lane.block}</text>`);
    for (const seg of lane.segments) {
      const x0 = x(lane.day, seg.start, model.dayMinutes);
      const x1 = x(lane.day, seg.end, model.dayMinutes);
      const fill = seg.kind === "emergency" ? "#c0504d" : "#4f81bd";
      const opacity = seg.grayed ? 0.35 : 1.0;
      parts.push(
        `<rect x="${x0.toFixed(2)}" y="${y + 4}" width="${Math.max(x1 - x0, 1).toFixed(2)}" ` +
        `height="${LANE_HEIGHT - 8}" fill="${fill}" fill-opacity="${opacity}">` +
        `<title>${seg.id} [${seg.status}] ${seg.start.toFixed(0)}-${seg.end.toFixed(0)}</title></rect>`,
      );
    }
  });
  const cursorDay = Math.floor(model.cursor / model.dayMinutes);
  const cx = x(cursorDay, model.cursor, model.dayMinutes);
  parts.push(`<line x1="${cx.toFixed(2)}" y1="0" x2="${cx.toFixed(2)}" y2="${height}" stroke="#e36c09" stroke-width="1.5"/>`);
  parts.push("</svg>");
  return parts.join("");
}
