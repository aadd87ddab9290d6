/**
 * Pure view-model rendering: a ClientView in, a BoardModel out. The DOM (or
 * the test) binds the model; no rules live here — a control is enabled iff
 * its legal-mask bit is true, full stop.
 */

import {
  ACTION_COUNT,
  ClientView,
  SchemaError,
  parseView,
} from "./protocol.js";

export const CARD_BACK = "\u{1F0A0}"; // card-back glyph for hidden cells

export interface Control {
  action: number; // wire action index 0..15
  label: string;
  enabled: boolean;
}

export interface CellModel {
  text: string; // value, card back, or removed marker
  interactive: boolean;
  removed: boolean;
}

export interface BoardModel {
  error: string | null; // schema mismatch banner; everything else empty
  sourceButtons: Control[]; // phase A: take discard / draw deck
  keepDiscardButtons: Control[]; // phase B
  cells: CellModel[]; // ego grid, row-major, clickable in phase C
  opponents: CellModel[][];
  discardTop: string;
  deckSize: number;
  drawnCard: string | null;
  scores: number[];
  yourTurn: boolean;
}

function cellText(value: number | null, removed: boolean): string {
  if (removed) return "--";
  if (value === null) return CARD_BACK;
  return String(value);
}

export function renderBoard(rawView: unknown): BoardModel {
  let view: ClientView;
  try {
    view = parseView(rawView);
  } catch (err) {
    if (err instanceof SchemaError) {
      return {
        error: err.message,
        sourceButtons: [],
        keepDiscardButtons: [],
        cells: [],
        opponents: [],
        discardTop: "",
        deckSize: 0,
        drawnCard: null,
        scores: [],
        yourTurn: false,
      };
    }
    throw err;
  }

  const mask = view.legal_mask;
  const ownGrid = view.grids[0];
  const cells: CellModel[] = ownGrid.map((cell, pos) => ({
    text: cellText(cell.value, cell.removed),
    // position actions are 4..15; removed cells are never mask-true but the
    // model also marks them non-interactive outright
    interactive: !cell.removed && mask[4 + pos],
    removed: cell.removed,
  }));

  const opponents = view.grids.slice(1).map((grid) =>
    grid.map((cell) => ({
      text: cellText(cell.value, cell.removed),
      interactive: false,
      removed: cell.removed,
    })),
  );

  return {
    error: null,
    sourceButtons: [
      { action: 0, label: "take discard", enabled: mask[0] },
      { action: 1, label: "draw deck", enabled: mask[1] },
    ],
    keepDiscardButtons: [
      { action: 2, label: "keep", enabled: mask[2] },
      { action: 3, label: "discard & flip", enabled: mask[3] },
    ],
    cells,
    opponents,
    discardTop: view.discard_top === null ? CARD_BACK : String(view.discard_top),
    deckSize: view.deck_size,
    drawnCard: view.drawn_card === null ? null : String(view.drawn_card),
    scores: view.cumulative_scores,
    yourTurn: mask.some((b) => b) && !view.game_over,
  };
}

/** Every enabled control in the model, by wire action index. */
export function enabledActions(model: BoardModel): number[] {
  const out: number[] = [];
  for (const c of [...model.sourceButtons, ...model.keepDiscardButtons]) {
    if (c.enabled) out.push(c.action);
  }
  model.cells.forEach((cell, pos) => {
    if (cell.interactive) out.push(4 + pos);
  });
  out.sort((a, b) => a - b);
  return out;
}

/** A board with no enabled controls (terminal screens, opponent's turn). */
export function disableAll(model: BoardModel): BoardModel {
  return {
    ...model,
    sourceButtons: model.sourceButtons.map((c) => ({ ...c, enabled: false })),
    keepDiscardButtons: model.keepDiscardButtons.map((c) => ({
      ...c,
      enabled: false,
    })),
    cells: model.cells.map((c) => ({ ...c, interactive: false })),
    yourTurn: false,
  };
}

export { ACTION_COUNT };
