/**
 * Wire types for the arena service. These mirror the server's JSON schemas
 * verbatim; the client renders what it is sent and never infers hidden
 * values or re-derives rules.
 */

export const ACTION_COUNT = 16;
export const GRID_SIZE = 12;

/** 0 = choose source, 1 = keep/discard, 2 = choose position. */
export type Phase = 0 | 1 | 2;

export interface CellView {
  value: number | null; // null while face-down or removed
  face_up: boolean;
  removed: boolean;
}

export interface ClientView {
  protocol: number;
  num_players: number;
  ego: number;
  grids: CellView[][]; // index 0 is always the ego seat
  discard_top: number | null;
  discard_size: number;
  deck_size: number;
  current_seat: number; // relative to ego
  phase: Phase;
  round_index: number;
  drawn_card: number | null; // only present while the ego holds it
  legal_mask: boolean[];
  cumulative_scores: number[];
  game_over: boolean;
}

export interface Analysis {
  winner_probabilities: number[]; // absolute seat order, sums to 1
  root_value: number;
  visit_distribution: number[];
}

export interface Frame {
  type: string;
  session: string;
  payload: Record<string, unknown>;
  seq: number;
}

export interface CreatedPayload {
  session: string;
  seed: number;
  view: ClientView;
}

export interface ViewPayload {
  view: ClientView;
}

export interface ThinkingPayload {
  seat: number;
}

export interface AgentMovePayload {
  seat: number;
  action: number;
  analysis: Analysis;
}

export interface RejectPayload {
  reason: string;
  legal_mask: boolean[];
}

export interface TerminalPayload {
  ranking: { order: number[]; ranks: number[] };
  cumulative_scores: number[];
  truncated: boolean;
  view: ClientView;
}

export class SchemaError extends Error {}

function fail(where: string): never {
  throw new SchemaError(`malformed payload: ${where}`);
}

const isNum = (x: unknown): x is number => typeof x === "number" && isFinite(x);
const isNumOrNull = (x: unknown) => x === null || isNum(x);

/** Validates an inbound frame envelope. */
export function parseFrame(raw: unknown): Frame {
  if (typeof raw !== "object" || raw === null) fail("frame");
  const f = raw as Record<string, unknown>;
  if (typeof f.type !== "string") fail("frame.type");
  if (typeof f.session !== "string") fail("frame.session");
  if (typeof f.payload !== "object" || f.payload === null) fail("frame.payload");
  if (!isNum(f.seq)) fail("frame.seq");
  return f as unknown as Frame;
}

/** Validates a view payload field by field; anything off is a SchemaError. */
export function parseView(raw: unknown): ClientView {
  if (typeof raw !== "object" || raw === null) fail("view");
  const v = raw as Record<string, unknown>;
  if (!isNum(v.num_players) || !isNum(v.ego) || !isNum(v.phase)) fail("view header");
  if (!Array.isArray(v.grids) || v.grids.length !== v.num_players) fail("grids");
  for (const grid of v.grids) {
    if (!Array.isArray(grid) || grid.length !== GRID_SIZE) fail("grid size");
    for (const cell of grid) {
      const c = cell as Record<string, unknown>;
      if (!isNumOrNull(c.value)) fail("cell.value");
      if (typeof c.face_up !== "boolean" || typeof c.removed !== "boolean")
        fail("cell flags");
    }
  }
  if (!Array.isArray(v.legal_mask) || v.legal_mask.length !== ACTION_COUNT)
    fail("legal_mask");
  if (v.legal_mask.some((b) => typeof b !== "boolean")) fail("legal_mask bits");
  if (!isNumOrNull(v.discard_top) || !isNum(v.discard_size)) fail("discard");
  if (!isNum(v.deck_size)) fail("deck_size");
  if (!isNumOrNull(v.drawn_card)) fail("drawn_card");
  if (!Array.isArray(v.cumulative_scores)) fail("scores");
  if (typeof v.game_over !== "boolean") fail("game_over");
  return v as unknown as ClientView;
}

export function parseAnalysis(raw: unknown): Analysis {
  if (typeof raw !== "object" || raw === null) fail("analysis");
  const a = raw as Record<string, unknown>;
  if (!Array.isArray(a.winner_probabilities)) fail("winner_probabilities");
  if (!isNum(a.root_value)) fail("root_value");
  return a as unknown as Analysis;
}
