"""Hand-crafted heuristic opponents plus a uniform-random baseline.

Six curriculum bots, each exploiting a different strategic principle:
greedy-value, info-first, column-hunter, risk-aware, end-round-aggro and
anti-discard. Every bot always returns a legal action (uniform fallback if
its rule points at an illegal move).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .engine import (
    ACT_DISCARD_FLIP,
    ACT_DRAW_DECK,
    ACT_KEEP,
    ACT_POSITION_BASE,
    ACT_TAKE_DISCARD,
    COLS,
    GRID_SIZE,
    ROWS,
    CounterRng,
    GameState,
    Grid,
    Phase,
    legal_actions,
)

# Expected value of an unseen card: sum(value*count)/150 = 760/150.
EXPECTED_HIDDEN = 760 / 150

CURRICULUM_NAMES = (
    "greedy-value",
    "info-first",
    "column-hunter",
    "risk-aware",
    "end-round-aggro",
    "anti-discard",
)


@dataclass(frozen=True)
class BotPolicy:
    name: str
    params: dict = field(default_factory=dict)


def bot_roster() -> list[BotPolicy]:
    """The six curriculum bots in stable evaluation order."""
    return [BotPolicy(name) for name in CURRICULUM_NAMES]


def make_bot(name: str, **params) -> BotPolicy:
    if name != "random" and name not in CURRICULUM_NAMES:
        raise ValueError(f"unknown bot: {name!r}")
    return BotPolicy(name, params)


def _visible_cells(grid: Grid) -> list[tuple[int, int]]:
    """(value, position) for face-up, non-removed cells."""
    return [
        (grid.cards[p], p)
        for p in range(GRID_SIZE)
        if not grid.removed[p] and grid.face_up[p]
    ]


def _max_visible(grid: Grid) -> tuple[int, int] | None:
    cells = _visible_cells(grid)
    return max(cells) if cells else None


def _first_face_down(grid: Grid) -> int | None:
    down = grid.face_down_positions()
    return down[0] if down else None


def _column_cells(col: int) -> tuple[int, int, int]:
    return (col, col + COLS, col + 2 * COLS)


def _flip_most_revealed_column(grid: Grid) -> int | None:
    """Face-down cell in the column with the most face-up cells."""
    best: tuple[int, int] | None = None
    for col in range(COLS):
        cells = _column_cells(col)
        if grid.removed[cells[0]]:
            continue
        down = [c for c in cells if not grid.face_up[c]]
        if not down:
            continue
        up_count = sum(1 for c in cells if grid.face_up[c])
        if best is None or up_count > best[0]:
            best = (up_count, down[0])
    return best[1] if best else None


def _column_completion_target(grid: Grid, value: int) -> int | None:
    """A cell whose replacement by `value` works toward a matched column:
    the column must already hold a matching face-up card and a slot that is
    not yet a face-up match."""
    for col in range(COLS):
        cells = _column_cells(col)
        if grid.removed[cells[0]]:
            continue
        matches = [c for c in cells if grid.face_up[c] and grid.cards[c] == value]
        open_slots = [
            c
            for c in cells
            if not (grid.face_up[c] and grid.cards[c] == value)
        ]
        if matches and open_slots:
            # prefer finishing on a face-up mismatch (guaranteed progress)
            face_up_slots = [c for c in open_slots if grid.face_up[c]]
            return face_up_slots[0] if face_up_slots else open_slots[0]
    return None


def _replace_position(grid: Grid, incoming: int) -> int:
    """Greedy placement: replace the max visible cell when that improves,
    else the first face-down cell, else the max visible cell regardless."""
    top = _max_visible(grid)
    if top is not None and top[0] > incoming:
        return top[1]
    down = _first_face_down(grid)
    if down is not None:
        return down
    return top[1] if top is not None else grid.active_positions()[0]


def _worst_visible_improvement(grid: Grid, incoming: int) -> tuple[int, int] | None:
    """(gain, position) for replacing the worst visible cell, if any."""
    top = _max_visible(grid)
    if top is None:
        return None
    return (top[0] - incoming, top[1])


def _race_score(grid: Grid) -> float:
    return grid.visible_score() + EXPECTED_HIDDEN * len(grid.face_down_positions())


def _greedy_value(state: GameState, grid: Grid) -> int:
    if state.phase == Phase.CHOOSE_SOURCE:
        top = state.discard[-1]
        max_vis = _max_visible(grid)
        if max_vis is not None and top <= max_vis[0] - 2:
            return ACT_TAKE_DISCARD
        return ACT_DRAW_DECK
    if state.phase == Phase.KEEP_OR_DISCARD:
        return ACT_KEEP if state.drawn_card <= 4 else ACT_DISCARD_FLIP
    if state.pending_flip:
        return ACT_POSITION_BASE + _first_face_down(grid)
    incoming = state.drawn_card if state.drawn_card is not None else state.discard[-1]
    return ACT_POSITION_BASE + _replace_position(grid, incoming)


def _info_first(state: GameState, grid: Grid) -> int:
    if state.phase == Phase.CHOOSE_SOURCE:
        return ACT_DRAW_DECK
    if state.phase == Phase.KEEP_OR_DISCARD:
        return ACT_KEEP if state.drawn_card <= 2 else ACT_DISCARD_FLIP
    if state.pending_flip:
        target = _flip_most_revealed_column(grid)
        if target is None:
            target = _first_face_down(grid)
        return ACT_POSITION_BASE + target
    down = _first_face_down(grid)
    if state.drawn_card is not None and down is not None:
        return ACT_POSITION_BASE + down
    incoming = state.drawn_card if state.drawn_card is not None else state.discard[-1]
    return ACT_POSITION_BASE + _replace_position(grid, incoming)


def _column_hunter(state: GameState, grid: Grid) -> int:
    if state.phase == Phase.CHOOSE_SOURCE:
        if _column_completion_target(grid, state.discard[-1]) is not None:
            return ACT_TAKE_DISCARD
        return _info_first(state, grid)
    if state.phase == Phase.CHOOSE_POSITION and not state.pending_flip:
        incoming = (
            state.drawn_card if state.drawn_card is not None else state.discard[-1]
        )
        target = _column_completion_target(grid, incoming)
        if target is not None:
            return ACT_POSITION_BASE + target
    return _info_first(state, grid)


def _risk_aware(state: GameState, grid: Grid) -> int:
    if state.phase == Phase.CHOOSE_SOURCE:
        top = state.discard[-1]
        improvement = _worst_visible_improvement(grid, top)
        if top <= 5 or (improvement is not None and improvement[0] >= 3):
            return ACT_TAKE_DISCARD
        return ACT_DRAW_DECK
    if state.phase == Phase.KEEP_OR_DISCARD:
        drawn = state.drawn_card
        improvement = _worst_visible_improvement(grid, drawn)
        if drawn <= 5 or (improvement is not None and improvement[0] >= 3):
            return ACT_KEEP
        return ACT_DISCARD_FLIP
    if state.pending_flip:
        return ACT_POSITION_BASE + _first_face_down(grid)
    incoming = state.drawn_card if state.drawn_card is not None else state.discard[-1]
    if incoming <= 5:
        down = _first_face_down(grid)
        if down is not None:
            return ACT_POSITION_BASE + down
    improvement = _worst_visible_improvement(grid, incoming)
    if improvement is not None and improvement[0] >= 3:
        return ACT_POSITION_BASE + improvement[1]
    return ACT_POSITION_BASE + _replace_position(grid, incoming)


def _end_round_aggro(state: GameState, grid: Grid) -> int:
    own = _race_score(grid)
    others = min(
        _race_score(state.grids[p])
        for p in range(state.num_players)
        if p != state.current_player
    )
    if own < others:
        if state.phase == Phase.CHOOSE_SOURCE:
            return ACT_DRAW_DECK
        if state.phase == Phase.KEEP_OR_DISCARD:
            return ACT_KEEP if state.drawn_card <= 0 else ACT_DISCARD_FLIP
        if state.pending_flip:
            return ACT_POSITION_BASE + _first_face_down(grid)
        down = _first_face_down(grid)
        if state.drawn_card is not None and down is not None:
            return ACT_POSITION_BASE + down
    return _risk_aware(state, grid)


def _anti_discard(state: GameState, grid: Grid) -> int:
    if state.phase == Phase.CHOOSE_SOURCE:
        return ACT_DRAW_DECK
    if state.phase == Phase.KEEP_OR_DISCARD:
        return ACT_KEEP if state.drawn_card <= 4 else ACT_DISCARD_FLIP
    if state.pending_flip:
        return ACT_POSITION_BASE + _first_face_down(grid)
    incoming = state.drawn_card if state.drawn_card is not None else state.discard[-1]
    if incoming <= 2:
        # low cards never land on a visible cell already below them
        top = _max_visible(grid)
        if top is not None and top[0] > incoming:
            return ACT_POSITION_BASE + top[1]
        down = _first_face_down(grid)
        if down is not None:
            return ACT_POSITION_BASE + down
    return ACT_POSITION_BASE + _replace_position(grid, incoming)


_RULES = {
    "greedy-value": _greedy_value,
    "info-first": _info_first,
    "column-hunter": _column_hunter,
    "risk-aware": _risk_aware,
    "end-round-aggro": _end_round_aggro,
    "anti-discard": _anti_discard,
}


def bot_act(policy: BotPolicy, state: GameState, rng: CounterRng) -> int:
    """Legal action for the acting player under the bot's rule."""
    mask = legal_actions(state)
    legal = [a for a, ok in enumerate(mask) if ok]
    if policy.name == "random":
        return rng.choice(legal)
    action = _RULES[policy.name](state, state.grids[state.current_player])
    if action is None or not mask[action]:
        return rng.choice(legal)
    return action
