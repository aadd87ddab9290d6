"""Deterministic, seedable Skyjo rules engine.

The game is decomposed into three decision phases per turn (choose source,
keep-or-discard, choose position), giving a masked 16-action space:

    0       take top of discard pile
    1       draw from the deck
    2       keep the drawn card
    3       discard the drawn card (then flip a face-down card)
    4..15   grid position, row-major r*4 + c

All operations are pure: they take a state and return a new state. A state is
cheap to clone (flat lists), so copy-then-mutate keeps the hot path fast.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import IntEnum

# Official deck composition: 150 cards, values -2..12.
CARD_COUNTS: dict[int, int] = {-2: 5, -1: 10, 0: 15}
for _v in range(1, 13):
    CARD_COUNTS[_v] = 10

TOTAL_CARDS = 150
ROWS = 3
COLS = 4
GRID_SIZE = ROWS * COLS
ACTION_COUNT = 16

ACT_TAKE_DISCARD = 0
ACT_DRAW_DECK = 1
ACT_KEEP = 2
ACT_DISCARD_FLIP = 3
ACT_POSITION_BASE = 4

RNG_VERSION = "sj-counter-v1"


class EngineError(Exception):
    pass


class IllegalActionError(EngineError):
    pass


class Phase(IntEnum):
    CHOOSE_SOURCE = 0
    KEEP_OR_DISCARD = 1
    CHOOSE_POSITION = 2


class EventType(IntEnum):
    TAKE_DISCARD_REPLACE = 0
    DECK_KEEP_REPLACE = 1
    DECK_DISCARD_FLIP = 2
    COLUMN_REMOVED = 3
    ROUND_END = 4
    GAME_END = 5


SOURCE_DECK = 0
SOURCE_DISCARD = 1
SOURCE_NONE = 2


def _mask64(x: int) -> int:
    return x & 0xFFFFFFFFFFFFFFFF


def _splitmix64(x: int) -> int:
    x = _mask64(x + 0x9E3779B97F4A7C15)
    x = _mask64((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9)
    x = _mask64((x ^ (x >> 27)) * 0x94D049BB133111EB)
    return x ^ (x >> 31)


class CounterRng:
    """Counter-based 64-bit generator (splitmix64 over (seed, counter)).

    State is just two integers, so cloning a game state stays cheap and
    replays are bit-identical across platforms. Version: sj-counter-v1.
    """

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int, counter: int = 0) -> None:
        self.seed = _mask64(seed)
        self.counter = counter

    def clone(self) -> "CounterRng":
        return CounterRng(self.seed, self.counter)

    def next_u64(self) -> int:
        out = _splitmix64(_mask64(self.seed ^ _splitmix64(self.counter)))
        self.counter += 1
        return out

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, items):
        return items[self.randint(len(items))]

    def state(self) -> tuple[int, int]:
        return (self.seed, self.counter)


@dataclass(frozen=True)
class PublicEvent:
    """One publicly observable consequence of a decision step.

    Values are only ever values that became public at the time of the event
    (cards placed face-up or landing on the discard pile).
    """

    actor: int
    etype: EventType
    source: int = SOURCE_NONE
    target: int = -1
    value_a: int | None = None
    value_b: int | None = None


@dataclass(frozen=True)
class RoundResult:
    scores: tuple[int, ...]
    doubled: tuple[bool, ...]
    trigger_player: int


@dataclass(frozen=True)
class Ranking:
    """order: player indices sorted by ascending cumulative score (ties by
    index); ranks: per-player rank with ties sharing the better rank."""

    order: tuple[int, ...]
    ranks: tuple[int, ...]


@dataclass
class StepEvents:
    events: list[PublicEvent] = field(default_factory=list)
    round_result: RoundResult | None = None
    ranking: Ranking | None = None


@dataclass(frozen=True)
class Rules:
    score_limit: int = 100
    step_cap: int = 1000
    history_window: int = 16
    # Official practice: only positive trigger scores get doubled. Set True
    # for the literal rule text that doubles regardless of sign.
    double_nonpositive: bool = False


DEFAULT_RULES = Rules()


class Grid:
    """One player's 3x4 card grid as parallel flat lists (row-major)."""

    __slots__ = ("cards", "face_up", "removed")

    def __init__(self, cards: list, face_up: list, removed: list) -> None:
        self.cards = cards
        self.face_up = face_up
        self.removed = removed

    @classmethod
    def deal(cls, cards: list[int]) -> "Grid":
        return cls(list(cards), [False] * GRID_SIZE, [False] * GRID_SIZE)

    def clone(self) -> "Grid":
        return Grid(self.cards[:], self.face_up[:], self.removed[:])

    def card_count(self) -> int:
        return sum(1 for c in self.cards if c is not None)

    def face_down_positions(self) -> list[int]:
        return [
            p
            for p in range(GRID_SIZE)
            if not self.removed[p] and not self.face_up[p]
        ]

    def active_positions(self) -> list[int]:
        return [p for p in range(GRID_SIZE) if not self.removed[p]]

    def all_revealed(self) -> bool:
        for p in range(GRID_SIZE):
            if not self.removed[p] and not self.face_up[p]:
                return False
        return True

    def visible_score(self) -> int:
        total = 0
        for p in range(GRID_SIZE):
            if not self.removed[p] and self.face_up[p]:
                total += self.cards[p]
        return total

    def full_score(self) -> int:
        total = 0
        for p in range(GRID_SIZE):
            if not self.removed[p]:
                total += self.cards[p]
        return total


class GameState:
    """Full hidden ground truth of a Skyjo match. Treat as immutable; all
    engine operations return fresh states."""

    __slots__ = (
        "num_players",
        "grids",
        "deck",
        "discard",
        "current_player",
        "phase",
        "drawn_card",
        "pending_flip",
        "round_index",
        "round_step",
        "cumulative_scores",
        "round_trigger",
        "final_turns_remaining",
        "step_count",
        "truncated",
        "game_over",
        "history",
        "rules",
        "rng",
    )

    def __init__(self, num_players: int, rules: Rules, rng: CounterRng) -> None:
        self.num_players = num_players
        self.grids: list[Grid] = []
        self.deck: list[int] = []
        self.discard: list[int] = []
        self.current_player = 0
        self.phase = Phase.CHOOSE_SOURCE
        self.drawn_card: int | None = None
        self.pending_flip = False
        self.round_index = 0
        self.round_step = 0
        self.cumulative_scores = [0] * num_players
        self.round_trigger: int | None = None
        self.final_turns_remaining: int | None = None
        self.step_count = 0
        self.truncated = False
        self.game_over = False
        self.history: tuple[PublicEvent, ...] = ()
        self.rules = rules
        self.rng = rng

    def clone(self) -> "GameState":
        s = GameState.__new__(GameState)
        s.num_players = self.num_players
        # Grids are shared copy-on-write: mutators clone the grid they touch.
        s.grids = list(self.grids)
        s.deck = self.deck[:]
        s.discard = self.discard[:]
        s.current_player = self.current_player
        s.phase = self.phase
        s.drawn_card = self.drawn_card
        s.pending_flip = self.pending_flip
        s.round_index = self.round_index
        s.round_step = self.round_step
        s.cumulative_scores = self.cumulative_scores[:]
        s.round_trigger = self.round_trigger
        s.final_turns_remaining = self.final_turns_remaining
        s.step_count = self.step_count
        s.truncated = self.truncated
        s.game_over = self.game_over
        s.history = self.history
        s.rules = self.rules
        s.rng = self.rng.clone()
        return s

    def total_cards(self) -> int:
        return (
            len(self.deck)
            + len(self.discard)
            + (1 if self.drawn_card is not None else 0)
            + sum(g.card_count() for g in self.grids)
        )


def full_deck() -> list[int]:
    cards: list[int] = []
    for value, count in CARD_COUNTS.items():
        cards.extend([value] * count)
    return cards


def _deal_round(state: GameState) -> None:
    """Deal a fresh round: shuffle a full deck, 12 cards per player, one card
    to the discard pile, two auto-reveals per player; the highest revealed sum
    starts (ties to the lowest player index)."""
    deck = full_deck()
    state.rng.shuffle(deck)
    state.grids = []
    for _ in range(state.num_players):
        hand = deck[-GRID_SIZE:]
        del deck[-GRID_SIZE:]
        state.grids.append(Grid.deal(hand))
    state.discard = [deck.pop()]
    state.deck = deck

    reveal_sums = []
    for grid in state.grids:
        positions = list(range(GRID_SIZE))
        a = positions.pop(state.rng.randint(len(positions)))
        b = positions.pop(state.rng.randint(len(positions)))
        grid.face_up[a] = True
        grid.face_up[b] = True
        reveal_sums.append(grid.cards[a] + grid.cards[b])

    best = max(reveal_sums)
    state.current_player = reveal_sums.index(best)
    state.phase = Phase.CHOOSE_SOURCE
    state.drawn_card = None
    state.pending_flip = False
    state.round_trigger = None
    state.final_turns_remaining = None
    state.round_step = 0


def new_game(num_players: int, seed: int, rules: Rules = DEFAULT_RULES) -> GameState:
    if not 2 <= num_players <= 8:
        raise EngineError(f"num_players must be in [2, 8], got {num_players}")
    state = GameState(num_players, rules, CounterRng(seed))
    _deal_round(state)
    return state


def legal_actions(state: GameState) -> list[bool]:
    """16-wide legality mask for the current decision point."""
    if state.game_over:
        raise EngineError("legal_actions called on a terminal state")
    mask = [False] * ACTION_COUNT
    grid = state.grids[state.current_player]
    if state.phase == Phase.CHOOSE_SOURCE:
        mask[ACT_TAKE_DISCARD] = len(state.discard) > 0
        mask[ACT_DRAW_DECK] = len(state.deck) > 0 or len(state.discard) > 1
    elif state.phase == Phase.KEEP_OR_DISCARD:
        mask[ACT_KEEP] = True
        mask[ACT_DISCARD_FLIP] = any(
            not grid.removed[p] and not grid.face_up[p]
            for p in range(GRID_SIZE)
        )
    else:
        if state.pending_flip:
            positions = grid.face_down_positions()
        else:
            positions = grid.active_positions()
        for p in positions:
            mask[ACT_POSITION_BASE + p] = True
    return mask


def _action_legal(state: GameState, action: int) -> bool:
    # Single-action fast path for apply_action; must agree with legal_actions
    # (the volume test cross-checks mask bits against IllegalActionError).
    grid = state.grids[state.current_player]
    if state.phase == Phase.CHOOSE_SOURCE:
        if action == ACT_TAKE_DISCARD:
            return len(state.discard) > 0
        if action == ACT_DRAW_DECK:
            return len(state.deck) > 0 or len(state.discard) > 1
        return False
    if state.phase == Phase.KEEP_OR_DISCARD:
        if action == ACT_KEEP:
            return True
        if action == ACT_DISCARD_FLIP:
            return any(
                not grid.removed[p] and not grid.face_up[p]
                for p in range(GRID_SIZE)
            )
        return False
    if action < ACT_POSITION_BASE:
        return False
    p = action - ACT_POSITION_BASE
    if grid.removed[p]:
        return False
    return not (state.pending_flip and grid.face_up[p])


def _remove_completed_columns(
    state: GameState, player: int, events: list[PublicEvent]
) -> None:
    grid = state.grids[player]
    for col in range(COLS):
        cells = (col, col + COLS, col + 2 * COLS)
        if grid.removed[col]:
            continue
        if not all(grid.face_up[c] for c in cells):
            continue
        v = grid.cards[cells[0]]
        if grid.cards[cells[1]] == v and grid.cards[cells[2]] == v:
            for c in cells:
                state.discard.append(grid.cards[c])
                grid.cards[c] = None
                grid.removed[c] = True
            events.append(
                PublicEvent(
                    actor=player,
                    etype=EventType.COLUMN_REMOVED,
                    target=col,
                    value_a=v,
                )
            )


def _compute_ranking(cumulative: list[int]) -> Ranking:
    order = sorted(range(len(cumulative)), key=lambda p: (cumulative[p], p))
    ranks = [1 + sum(1 for q in cumulative if q < cumulative[p]) for p in range(len(cumulative))]
    return Ranking(order=tuple(order), ranks=tuple(ranks))


def score_round(state: GameState) -> tuple[GameState, RoundResult]:
    """Reveal all remaining cards and score the finished round.

    Precondition: the trigger is set and every other player has used their
    final turn. End-of-round auto-reveals never clear columns.
    """
    if state.round_trigger is None or state.final_turns_remaining != 0:
        raise EngineError("score_round called before the round has ended")
    state = state.clone()
    state.grids = [g.clone() for g in state.grids]
    for grid in state.grids:
        for p in range(GRID_SIZE):
            if not grid.removed[p]:
                grid.face_up[p] = True
    raw = [g.full_score() for g in state.grids]
    trigger = state.round_trigger
    doubled = [False] * state.num_players
    others_min = min(raw[p] for p in range(state.num_players) if p != trigger)
    if others_min <= raw[trigger]:
        if raw[trigger] > 0 or state.rules.double_nonpositive:
            doubled[trigger] = True
    scores = [
        raw[p] * 2 if doubled[p] else raw[p] for p in range(state.num_players)
    ]
    for p in range(state.num_players):
        state.cumulative_scores[p] += scores[p]
    result = RoundResult(
        scores=tuple(scores), doubled=tuple(doubled), trigger_player=trigger
    )
    return state, result


def _push_history(state: GameState, events: list[PublicEvent]) -> None:
    if not events:
        return
    window = state.rules.history_window
    state.history = (state.history + tuple(events))[-window:]


def _advance_turn(state: GameState, step: StepEvents) -> None:
    """End the acting player's turn: trigger bookkeeping, round scoring and
    re-deal, game-over detection."""
    actor = state.current_player
    grid = state.grids[actor]
    if state.round_trigger is None and grid.all_revealed():
        state.round_trigger = actor
        state.final_turns_remaining = state.num_players - 1
        step.events.append(PublicEvent(actor=actor, etype=EventType.ROUND_END))
    elif state.round_trigger is not None and actor != state.round_trigger:
        state.final_turns_remaining -= 1

    if state.round_trigger is not None and state.final_turns_remaining == 0:
        scored, result = score_round(state)
        # Copy the scored fields back onto our working state.
        state.grids = scored.grids
        state.cumulative_scores = scored.cumulative_scores
        step.round_result = result
        state.round_index += 1
        if max(state.cumulative_scores) >= state.rules.score_limit:
            state.game_over = True
            step.ranking = _compute_ranking(state.cumulative_scores)
            step.events.append(
                PublicEvent(actor=result.trigger_player, etype=EventType.GAME_END)
            )
        else:
            _deal_round(state)
        return

    state.current_player = (actor + 1) % state.num_players
    state.phase = Phase.CHOOSE_SOURCE
    state.drawn_card = None
    state.pending_flip = False


def apply_action(state: GameState, action: int) -> tuple[GameState, StepEvents]:
    if state.game_over:
        raise EngineError("apply_action called on a terminal state")
    if not 0 <= action < ACTION_COUNT or not _action_legal(state, action):
        raise IllegalActionError(
            f"action {action} illegal in phase {state.phase.name}"
        )
    state = state.clone()
    step = StepEvents()
    actor = state.current_player
    # Only the actor's grid is written this step; un-share it now.
    grid = state.grids[actor] = state.grids[actor].clone()

    if state.phase == Phase.CHOOSE_SOURCE:
        if action == ACT_TAKE_DISCARD:
            # The taken card stays on the pile until placement; it is public.
            state.phase = Phase.CHOOSE_POSITION
            state.pending_flip = False
        else:
            if not state.deck:
                # Reshuffle the discard pile (minus its top card) into a deck.
                top = state.discard.pop()
                state.deck = state.discard
                state.discard = [top]
                state.rng.shuffle(state.deck)
            state.drawn_card = state.deck.pop()
            state.phase = Phase.KEEP_OR_DISCARD
    elif state.phase == Phase.KEEP_OR_DISCARD:
        if action == ACT_KEEP:
            state.phase = Phase.CHOOSE_POSITION
            state.pending_flip = False
        else:
            state.discard.append(state.drawn_card)
            state.drawn_card = None
            state.phase = Phase.CHOOSE_POSITION
            state.pending_flip = True
    else:
        pos = action - ACT_POSITION_BASE
        if state.pending_flip:
            grid.face_up[pos] = True
            step.events.append(
                PublicEvent(
                    actor=actor,
                    etype=EventType.DECK_DISCARD_FLIP,
                    source=SOURCE_DECK,
                    target=pos,
                    value_a=state.discard[-1],
                    value_b=grid.cards[pos],
                )
            )
        elif state.drawn_card is not None:
            replaced = grid.cards[pos]
            grid.cards[pos] = state.drawn_card
            grid.face_up[pos] = True
            state.discard.append(replaced)
            step.events.append(
                PublicEvent(
                    actor=actor,
                    etype=EventType.DECK_KEEP_REPLACE,
                    source=SOURCE_DECK,
                    target=pos,
                    value_a=grid.cards[pos],
                    value_b=replaced,
                )
            )
            state.drawn_card = None
        else:
            taken = state.discard.pop()
            replaced = grid.cards[pos]
            grid.cards[pos] = taken
            grid.face_up[pos] = True
            state.discard.append(replaced)
            step.events.append(
                PublicEvent(
                    actor=actor,
                    etype=EventType.TAKE_DISCARD_REPLACE,
                    source=SOURCE_DISCARD,
                    target=pos,
                    value_a=taken,
                    value_b=replaced,
                )
            )
        _remove_completed_columns(state, actor, step.events)
        _advance_turn(state, step)

    state.step_count += 1
    state.round_step += 1
    if not state.game_over and state.step_count >= state.rules.step_cap:
        state.game_over = True
        state.truncated = True
        # truncated games are still decided by final Skyjo score: the
        # in-progress round counts at face value (full grids, no doubling)
        for p in range(state.num_players):
            state.cumulative_scores[p] += state.grids[p].full_score()
        step.ranking = _compute_ranking(state.cumulative_scores)
        step.events.append(PublicEvent(actor=actor, etype=EventType.GAME_END))
    _push_history(state, step.events)
    return state, step


def is_terminal(state: GameState) -> Ranking | None:
    if not state.game_over:
        return None
    return _compute_ranking(state.cumulative_scores)


def state_hash(state: GameState) -> int:
    """Stable 64-bit digest over all game fields except the RNG internals."""
    parts = [
        state.num_players,
        int(state.phase),
        state.current_player,
        state.drawn_card if state.drawn_card is not None else "N",
        int(state.pending_flip),
        state.round_index,
        tuple(state.cumulative_scores),
        state.round_step,
        state.round_trigger if state.round_trigger is not None else "N",
        state.final_turns_remaining
        if state.final_turns_remaining is not None
        else "N",
        state.step_count,
        int(state.truncated),
        int(state.game_over),
        tuple(state.deck),
        tuple(state.discard),
        tuple(
            (
                tuple(c if c is not None else "N" for c in g.cards),
                tuple(int(b) for b in g.face_up),
                tuple(int(b) for b in g.removed),
            )
            for g in state.grids
        ),
        tuple(
            (e.actor, int(e.etype), e.source, e.target, e.value_a, e.value_b)
            for e in state.history
        ),
    ]
    blob = repr(parts).encode()
    return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "big")


def state_dump(state: GameState) -> str:
    """Human-readable state dump with a stable field order (debugging aid)."""
    lines = [
        f"players={state.num_players} round={state.round_index} "
        f"step={state.step_count} phase={state.phase.name}",
        f"current={state.current_player} drawn={state.drawn_card} "
        f"pending_flip={state.pending_flip}",
        f"trigger={state.round_trigger} final_turns={state.final_turns_remaining} "
        f"over={state.game_over} truncated={state.truncated}",
        f"cumulative={state.cumulative_scores}",
        f"deck={len(state.deck)} discard_top="
        f"{state.discard[-1] if state.discard else None} "
        f"discard_size={len(state.discard)}",
    ]
    for i, grid in enumerate(state.grids):
        rows = []
        for r in range(ROWS):
            cells = []
            for c in range(COLS):
                p = r * COLS + c
                if grid.removed[p]:
                    cells.append("  x")
                elif grid.face_up[p]:
                    cells.append(f"{grid.cards[p]:>3}")
                else:
                    cells.append("  ?")
            rows.append(" ".join(cells))
        lines.append(f"grid[{i}]: " + " | ".join(rows))
    return "\n".join(lines)


REPLAY_VERSION = 1


def save_replay(num_players: int, seed: int, actions: list[int]) -> bytes:
    """Serialize a replay to canonical JSON bytes (bit-exact round-trip)."""
    doc = {
        "format_version": REPLAY_VERSION,
        "num_players": num_players,
        "seed": seed,
        "actions": list(actions),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def load_replay(blob: bytes) -> tuple[int, int, list[int]]:
    doc = json.loads(blob.decode())
    if doc.get("format_version") != REPLAY_VERSION:
        raise EngineError(f"unsupported replay version: {doc.get('format_version')}")
    return doc["num_players"], doc["seed"], list(doc["actions"])


def replay_game(
    num_players: int, seed: int, actions: list[int], rules: Rules = DEFAULT_RULES
) -> GameState:
    state = new_game(num_players, seed, rules)
    for action in actions:
        state, _ = apply_action(state, action)
    return state
