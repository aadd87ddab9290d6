"""Tokenized partial observations.

Maps a full game state plus an ego player to the sequence of typed integer
tokens the agent is allowed to see: board tokens (face-down values masked),
a discard token, a global token, a 16-slot public action history, and a
decision token. Board tokens are ego-rotated so seat 0 always means "me".

Schema version: obs-v1. Checkpoints record this version and refuse to load
observations encoded under a different one.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import engine
from .engine import (
    GRID_SIZE,
    EventType,
    GameState,
    PublicEvent,
    StepEvents,
)

SCHEMA_VERSION = "obs-v1"

HISTORY_WINDOW = 16

# Card values -2..12 map to indices 0..14; 15 is the UNKNOWN sentinel for
# face-down cards, 16 the PAD sentinel (history slots only).
CARD_VALUES = 15
UNKNOWN = 15
VALUE_PAD = 16

STEP_CLIP = 1000
COUNT_CLIP = 150
ROUND_CLIP = 31

# Round-phase buckets by decision steps within the round.
BUCKET_EARLY_END = 30
BUCKET_MID_END = 70

TARGET_NONE = 12
SOURCE_PAD = 3
TARGET_PAD = 13
EVENT_TYPES = 6
TYPE_PAD = EVENT_TYPES
ACTOR_PAD_OFFSET = 0  # actor PAD index is num_players (see vocabulary_sizes)


class TokenKind(IntEnum):
    BOARD = 0
    DISCARD = 1
    GLOBAL = 2
    HISTORY = 3
    DECISION = 4


N_FEATURES = 6  # widest token kind (board, global, history all use <= 6)


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    features: tuple[int, ...]


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[Token, ...]
    ego: int
    num_players: int

    def feature_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """(kinds, features) integer arrays; unused feature slots are 0."""
        kinds = np.array([int(t.kind) for t in self.tokens], dtype=np.int64)
        feats = np.zeros((len(self.tokens), N_FEATURES), dtype=np.int64)
        for i, t in enumerate(self.tokens):
            feats[i, : len(t.features)] = t.features
        return kinds, feats


def sequence_length(num_players: int) -> int:
    return GRID_SIZE * num_players + 1 + 1 + HISTORY_WINDOW + 1


def value_index(card: int | None) -> int:
    if card is None:
        return UNKNOWN
    return card + 2


def vocabulary_sizes(num_players: int = 8) -> dict[str, int]:
    """Per-feature vocabulary cardinalities consumed by the embedding layers."""
    return {
        "card_value": CARD_VALUES + 1,  # values + UNKNOWN
        "history_value": CARD_VALUES + 2,  # values + UNKNOWN + PAD
        "owner": num_players + 1,  # seats + PAD
        "position": GRID_SIZE,
        "visible": 2,
        "removed": 2,
        "pile_size": COUNT_CLIP + 1,
        "deck_size": COUNT_CLIP + 1,
        "step_count": STEP_CLIP + 1,
        "current_player": num_players,
        "phase": 3,
        "round_bucket": 3,
        "round_index": ROUND_CLIP + 1,
        "history_actor": num_players + 1,  # seats + PAD
        "history_action_type": EVENT_TYPES + 1,  # event types + PAD
        "history_source": SOURCE_PAD + 1,
        "history_target": TARGET_PAD + 1,  # 12 positions + none + PAD
        "token_kind": len(TokenKind),
    }


def round_bucket(round_step: int) -> int:
    if round_step < BUCKET_EARLY_END:
        return 0
    if round_step < BUCKET_MID_END:
        return 1
    return 2


def _seat(player: int, ego: int, num_players: int) -> int:
    return (player - ego) % num_players


def _history_token(event: PublicEvent | None, ego: int, num_players: int) -> Token:
    if event is None:
        return Token(
            TokenKind.HISTORY,
            (num_players, TYPE_PAD, SOURCE_PAD, TARGET_PAD, VALUE_PAD, VALUE_PAD),
        )
    return Token(
        TokenKind.HISTORY,
        (
            _seat(event.actor, ego, num_players),
            int(event.etype),
            event.source,
            event.target if event.target >= 0 else TARGET_NONE,
            value_index(event.value_a),
            value_index(event.value_b),
        ),
    )


def encode_observation(state: GameState, ego: int) -> TokenSequence:
    """Ego's partial view of the state as a token sequence.

    Every face-down card (any owner, ego included) is encoded as UNKNOWN; the
    drawn card is visible only while the ego player is the one holding it.
    """
    if not 0 <= ego < state.num_players:
        raise engine.EngineError(f"invalid ego player {ego}")
    n = state.num_players
    tokens: list[Token] = []

    for seat in range(n):
        player = (ego + seat) % n
        grid = state.grids[player]
        for pos in range(GRID_SIZE):
            removed = grid.removed[pos]
            visible = grid.face_up[pos] and not removed
            value = grid.cards[pos] if visible else None
            tokens.append(
                Token(
                    TokenKind.BOARD,
                    (seat, pos, int(visible), value_index(value), int(removed)),
                )
            )

    top = state.discard[-1] if state.discard else None
    tokens.append(
        Token(
            TokenKind.DISCARD,
            (value_index(top), min(len(state.discard), COUNT_CLIP)),
        )
    )

    tokens.append(
        Token(
            TokenKind.GLOBAL,
            (
                min(len(state.deck), COUNT_CLIP),
                min(state.step_count, STEP_CLIP),
                _seat(state.current_player, ego, n),
                int(state.phase),
                round_bucket(state.round_step),
                min(state.round_index, ROUND_CLIP),
            ),
        )
    )

    events = state.history[-HISTORY_WINDOW:]
    pad_count = HISTORY_WINDOW - len(events)
    for _ in range(pad_count):
        tokens.append(_history_token(None, ego, n))
    for event in events:
        tokens.append(_history_token(event, ego, n))

    if state.drawn_card is not None and ego == state.current_player:
        drawn = value_index(state.drawn_card)
    else:
        drawn = UNKNOWN
    tokens.append(Token(TokenKind.DECISION, (int(state.phase), drawn)))

    return TokenSequence(tokens=tuple(tokens), ego=ego, num_players=n)


def legal_mask(state: GameState) -> list[bool]:
    return engine.legal_actions(state)


def history_push(
    history: tuple[PublicEvent, ...], step: StepEvents | list[PublicEvent]
) -> tuple[PublicEvent, ...]:
    """Append the public projection of a step's events, keeping the last 16."""
    events = step.events if isinstance(step, StepEvents) else step
    return (tuple(history) + tuple(events))[-HISTORY_WINDOW:]


def history_tokens(
    history: tuple[PublicEvent, ...], ego: int, num_players: int
) -> list[Token]:
    events = history[-HISTORY_WINDOW:]
    out = [_history_token(None, ego, num_players)] * (HISTORY_WINDOW - len(events))
    out.extend(_history_token(e, ego, num_players) for e in events)
    return out
