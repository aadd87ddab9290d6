"""Arena service: hosts human-vs-agent games behind a JSON frame protocol.

The protocol is a persistent ordered channel per session carrying frames
{type, session, payload, seq}; outbound seq numbers increase monotonically
per session and the server is authoritative for legality and state. The
transport wrapper (`build_app`) is a thin websocket shim over the pure
`SessionManager`, which is what the fuzz tests drive directly.

Privacy: every outbound view is decoded from the ego-masked token encoding,
so a hidden card value can never reach a payload by construction.
"""

from __future__ import annotations

import os
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import WebSocket

from . import encoding, search
from .encoding import UNKNOWN, TokenKind
from .engine import (
    ACTION_COUNT,
    DEFAULT_RULES,
    GRID_SIZE,
    GameState,
    Rules,
    apply_action,
    is_terminal,
    new_game,
    state_hash,
)
from .nets import MuZeroNet

CHECKPOINT_DIR_ENV = "SKYJO_ZERO_CHECKPOINT_DIR"
DEFAULT_SIMULATIONS = 200
PROTOCOL_VERSION = 1

INBOUND_TYPES = ("create", "action", "view")
OUTBOUND_TYPES = (
    "created", "view", "thinking", "agent_move", "reject", "terminal", "error",
)


class ServiceError(Exception):
    pass


def view_from_state(state: GameState, ego: int) -> dict:
    """Ego-private view decoded from the masked token observation. Only
    public extras (scores, counters) are added from the raw state."""
    obs = encoding.encode_observation(state, ego)
    n = state.num_players
    grids = []
    for seat in range(n):
        cells = []
        for pos in range(GRID_SIZE):
            token = obs.tokens[seat * GRID_SIZE + pos]
            assert token.kind == TokenKind.BOARD
            _, _, visible, value_idx, removed = token.features
            cells.append(
                {
                    "value": None if value_idx == UNKNOWN else value_idx - 2,
                    "face_up": bool(visible),
                    "removed": bool(removed),
                }
            )
        grids.append(cells)
    discard = obs.tokens[n * GRID_SIZE]
    global_token = obs.tokens[n * GRID_SIZE + 1]
    decision = obs.tokens[-1]
    drawn_idx = decision.features[1]
    return {
        "protocol": PROTOCOL_VERSION,
        "num_players": n,
        "ego": ego,
        "grids": grids,  # index 0 is always the ego seat
        "discard_top": None
        if discard.features[0] == UNKNOWN
        else discard.features[0] - 2,
        "discard_size": discard.features[1],
        "deck_size": global_token.features[0],
        "current_seat": global_token.features[2],  # relative to ego
        "phase": int(state.phase),
        "round_index": state.round_index,
        "drawn_card": None if drawn_idx == UNKNOWN else drawn_idx - 2,
        "legal_mask": [bool(b) for b in encoding.legal_mask(state)]
        if state.current_player == ego and not state.game_over
        else [False] * ACTION_COUNT,
        "cumulative_scores": list(state.cumulative_scores),  # public
        "game_over": state.game_over,
    }


@dataclass
class Session:
    session_id: str
    state: GameState
    human_seat: int
    net: MuZeroNet
    checkpoint_id: str
    simulations: int
    seed: int
    seq: int = 0
    action_log: list[int] = field(default_factory=list)

    def next_seq(self) -> int:
        self.seq += 1
        return self.seq


class SessionManager:
    """Owns all live sessions; one logical owner per session state."""

    def __init__(
        self,
        checkpoint_dir: str | Path | None = None,
        default_simulations: int = DEFAULT_SIMULATIONS,
    ) -> None:
        env = os.environ.get(CHECKPOINT_DIR_ENV)
        self.checkpoint_dir = Path(checkpoint_dir or env) if (checkpoint_dir or env) else None
        self.default_simulations = default_simulations
        self.sessions: dict[str, Session] = {}
        self._registry: dict[str, MuZeroNet] = {}

    def register_checkpoint(self, name: str, net: MuZeroNet) -> None:
        self._registry[name] = net

    def _load(self, checkpoint: str) -> MuZeroNet:
        if checkpoint in self._registry:
            return self._registry[checkpoint]
        if self.checkpoint_dir is not None:
            path = self.checkpoint_dir / checkpoint
            if (path / "manifest.json").exists():
                net = MuZeroNet.load(path)
                self._registry[checkpoint] = net
                return net
        raise ServiceError(f"unknown checkpoint: {checkpoint!r}")

    # -- session operations -------------------------------------------------

    def create_session(
        self,
        num_players: int,
        human_seat: int,
        checkpoint: str,
        seed: int | None = None,
        simulations: int | None = None,
        rules: Rules = DEFAULT_RULES,
    ) -> tuple[Session, list[dict]]:
        if not isinstance(num_players, int) or not 2 <= num_players <= 8:
            raise ServiceError("num_players must be an integer between 2 and 8")
        if not isinstance(human_seat, int) or not 0 <= human_seat < num_players:
            raise ServiceError("human seat out of range")
        if simulations is not None and (
            not isinstance(simulations, int) or simulations < 1
        ):
            raise ServiceError("simulations must be a positive integer")
        net = self._load(checkpoint)
        seed = int(seed) if seed is not None else int.from_bytes(os.urandom(4), "little")
        session = Session(
            session_id=uuid.uuid4().hex,
            state=new_game(num_players, seed, rules),
            human_seat=human_seat,
            net=net,
            checkpoint_id=checkpoint,
            simulations=simulations or self.default_simulations,
            seed=seed,
        )
        self.sessions[session.session_id] = session
        events = self._drive_agents(session)
        return session, events

    def get_session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise ServiceError(f"stale or unknown session: {session_id!r}")
        return session

    def submit_action(self, session_id: str, action) -> list[dict]:
        """Applies a human action; returns ordered event payloads (agent
        replies included). Illegal input rejects without touching state."""
        session = self.get_session(session_id)
        state = session.state
        if state.game_over:
            return [self._terminal_payload(session)]
        if state.current_player != session.human_seat:
            return [
                {
                    "type": "reject",
                    "reason": "not your turn",
                    "legal_mask": [False] * ACTION_COUNT,
                }
            ]
        mask = encoding.legal_mask(state)
        if (
            not isinstance(action, int)
            or isinstance(action, bool)
            or not 0 <= action < ACTION_COUNT
            or not mask[action]
        ):
            return [
                {
                    "type": "reject",
                    "reason": f"illegal action: {action!r}",
                    "legal_mask": [bool(b) for b in mask],
                }
            ]
        session.state, _ = apply_action(state, action)
        session.action_log.append(action)
        events = self._drive_agents(session)
        return events

    # -- agent driving ------------------------------------------------------

    def _analysis(self, session: Session, result) -> dict:
        """Winner-head probabilities (absolute seat order) and root value."""
        state = session.state
        mover = state.current_player
        obs = encoding.encode_observation(state, mover)
        h = session.net.represent([obs])
        hc = session.net.ego_condition(
            h, [0], [0], [state.num_players]
        )
        logits = session.net.winner_logits(hc, state.num_players).data[0]
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        absolute = [0.0] * state.num_players
        for seat in range(state.num_players):
            absolute[(mover + seat) % state.num_players] = float(probs[seat])
        return {
            "winner_probabilities": absolute,
            "root_value": float(result.root_value),
            "visit_distribution": [float(x) for x in result.policy],
        }

    def _drive_agents(self, session: Session) -> list[dict]:
        """Advance agent seats until the human decides or the game ends."""
        events: list[dict] = []
        rng = np.random.default_rng(0)  # unused: greedy, no noise
        while (
            not session.state.game_over
            and session.state.current_player != session.human_seat
        ):
            mover = session.state.current_player
            events.append({"type": "thinking", "seat": mover})
            result = search.run_mcts(
                session.net,
                session.state,
                ego=mover,
                num_simulations=session.simulations,
                rng=rng,
                add_noise=False,
            )
            action = search.select_action(result.visit_counts, temperature=0.0)
            analysis = self._analysis(session, result)
            session.state, _ = apply_action(session.state, action)
            session.action_log.append(action)
            events.append(
                {
                    "type": "agent_move",
                    "seat": mover,
                    "action": action,
                    "analysis": analysis,
                }
            )
        if session.state.game_over:
            events.append(self._terminal_payload(session))
        else:
            events.append(
                {
                    "type": "view",
                    "view": view_from_state(session.state, session.human_seat),
                }
            )
        return events

    def _terminal_payload(self, session: Session) -> dict:
        ranking = is_terminal(session.state)
        return {
            "type": "terminal",
            "ranking": {
                "order": list(ranking.order),
                "ranks": list(ranking.ranks),
            },
            "cumulative_scores": list(session.state.cumulative_scores),
            "truncated": session.state.truncated,
            "view": view_from_state(session.state, session.human_seat),
        }

    def state_digest(self, session_id: str) -> int:
        return state_hash(self.get_session(session_id).state)


# -- frame protocol ---------------------------------------------------------


def handle_frame(manager: SessionManager, frame) -> list[dict]:
    """Process one inbound frame; returns outbound frames with per-session
    monotonic seq numbers. Malformed input yields an error frame and never
    touches game state."""

    def error(reason: str, session_id: str = "") -> list[dict]:
        return [
            {"type": "error", "session": session_id, "payload": {"reason": reason}, "seq": 0}
        ]

    if not isinstance(frame, dict):
        return error("frame must be an object")
    ftype = frame.get("type")
    payload = frame.get("payload")
    session_id = frame.get("session", "")
    if ftype not in INBOUND_TYPES:
        return error(f"unknown frame type: {ftype!r}")
    if not isinstance(payload, dict):
        return error("payload must be an object")

    if ftype == "create":
        try:
            session, events = manager.create_session(
                num_players=payload.get("num_players", 2),
                human_seat=payload.get("human_seat", 0),
                checkpoint=payload.get("checkpoint", ""),
                seed=payload.get("seed"),
                simulations=payload.get("simulations"),
            )
        except (ServiceError, TypeError, ValueError) as exc:
            return error(str(exc))
        out = [
            {
                "type": "created",
                "session": session.session_id,
                "payload": {
                    "session": session.session_id,
                    "seed": session.seed,
                    "view": view_from_state(session.state, session.human_seat),
                },
                "seq": session.next_seq(),
            }
        ]
        for event in events:
            out.append(
                {
                    "type": event["type"],
                    "session": session.session_id,
                    "payload": event,
                    "seq": session.next_seq(),
                }
            )
        return out

    try:
        session = manager.get_session(str(session_id))
    except ServiceError as exc:
        return error(str(exc), str(session_id))

    if ftype == "view":
        return [
            {
                "type": "view",
                "session": session.session_id,
                "payload": {
                    "view": view_from_state(session.state, session.human_seat)
                },
                "seq": session.next_seq(),
            }
        ]

    # ftype == "action"
    events = manager.submit_action(session.session_id, payload.get("action"))
    return [
        {
            "type": event["type"],
            "session": session.session_id,
            "payload": event,
            "seq": session.next_seq(),
        }
        for event in events
    ]


def build_app(manager: SessionManager | None = None):
    """FastAPI app exposing the frame protocol on /ws (one socket per
    session channel) and a health probe on /healthz."""
    # module-level import: the websocket handler's annotation must resolve
    # in module scope under postponed evaluation
    from fastapi import FastAPI, WebSocketDisconnect

    manager = manager or SessionManager()
    app = FastAPI(title="skyjo-zero arena")
    app.state.manager = manager

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "protocol": PROTOCOL_VERSION}

    @app.websocket("/ws")
    async def ws_endpoint(socket: WebSocket):
        await socket.accept()
        try:
            while True:
                frame = await socket.receive_json()
                for out in handle_frame(manager, frame):
                    await socket.send_json(out)
        except WebSocketDisconnect:
            return

    return app
