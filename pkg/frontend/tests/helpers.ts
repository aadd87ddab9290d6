/** Shared fixtures: canned views and a scriptable in-memory transport. */

import { Transport } from "../src/client.js";

export function cell(
  value: number | null = null,
  face_up = false,
  removed = false,
) {
  return { value, face_up, removed };
}

export function hiddenGrid() {
  return Array.from({ length: 12 }, () => cell());
}

export interface ViewOverrides {
  grids?: unknown[][];
  legal_mask?: boolean[];
  phase?: number;
  drawn_card?: number | null;
  game_over?: boolean;
  cumulative_scores?: number[];
  discard_top?: number | null;
}

const PHASE_A_MASK = [true, true, ...Array(14).fill(false)] as boolean[];

export function makeView(over: ViewOverrides = {}) {
  const ego = hiddenGrid();
  ego[0] = cell(7, true);
  ego[5] = cell(-2, true);
  return {
    protocol: 1,
    num_players: 2,
    ego: 0,
    grids: over.grids ?? [ego, hiddenGrid()],
    discard_top: over.discard_top !== undefined ? over.discard_top : 4,
    discard_size: 1,
    deck_size: 120,
    current_seat: 0,
    phase: over.phase ?? 0,
    round_index: 0,
    drawn_card: over.drawn_card ?? null,
    legal_mask: over.legal_mask ?? PHASE_A_MASK,
    cumulative_scores: over.cumulative_scores ?? [0, 0],
    game_over: over.game_over ?? false,
  };
}

export function frame(
  type: string,
  seq: number,
  payload: Record<string, unknown>,
  session = "s1",
) {
  return { type, session, payload, seq };
}

export class FakeTransport implements Transport {
  sent: Record<string, unknown>[] = [];
  private handler: (raw: unknown) => void = () => {};

  send(f: object): void {
    this.sent.push(f as Record<string, unknown>);
  }

  onFrame(h: (raw: unknown) => void): void {
    this.handler = h;
  }

  deliver(raw: unknown): void {
    this.handler(raw);
  }
}
