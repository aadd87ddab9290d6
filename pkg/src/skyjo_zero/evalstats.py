"""Match-play evaluation and latent-probe statistics.

Head-to-head protocol: paired seeds with exact seat alternation — games 2i and
2i+1 replay the same deal with the seats swapped — so deterministic agents of
equal strength split wins exactly. Reports carry a Wilson score interval, a
z-statistic against the 0.5 null, and the Elo difference implied by the win
rate (draws count in the denominator).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import bots as bots_mod
from . import encoding, search
from .engine import (
    DEFAULT_RULES,
    CounterRng,
    GameState,
    Rules,
    apply_action,
    new_game,
)
from .nets import MuZeroNet

Z_95 = 1.96
RIDGE_ALPHA = 1.0
PROBE_FOLDS = 5


class EvalError(Exception):
    pass


def wilson_interval(wins: int, games: int, z: float = Z_95) -> tuple[float, float]:
    if games <= 0:
        raise EvalError("games must be positive")
    p = wins / games
    denom = 1.0 + z * z / games
    center = (p + z * z / (2 * games)) / denom
    half = z * math.sqrt(p * (1 - p) / games + z * z / (4 * games * games)) / denom
    return (center - half, center + half)


def z_test(wins: int, games: int) -> float:
    if games <= 0:
        raise EvalError("games must be positive")
    return (wins / games - 0.5) / math.sqrt(0.25 / games)


def elo_delta(win_rate: float) -> float:
    """Elo difference implied by a win rate under the logistic model."""
    if win_rate <= 0.0:
        return -math.inf
    if win_rate >= 1.0:
        return math.inf
    return -400.0 * math.log10(1.0 / win_rate - 1.0)


@dataclass(frozen=True)
class MatchReport:
    wins_a: int
    wins_b: int
    draws: int
    games: int
    win_rate: float  # wins_a / games; draws stay in the denominator
    wilson: tuple[float, float]
    elo: float
    z: float
    truncation_rate: float
    mean_episode_length: float
    mean_score_diff: float  # mean (score_b - score_a); positive favors a


@dataclass(frozen=True)
class GameOutcome:
    winner_slot: int  # 0 / 1, or -1 for a draw
    scores: tuple[int, ...]
    steps: int
    truncated: bool


def _report(
    wins_a: int, wins_b: int, draws: int, outcomes: list[GameOutcome]
) -> MatchReport:
    games = len(outcomes)
    rate = wins_a / games
    return MatchReport(
        wins_a=wins_a,
        wins_b=wins_b,
        draws=draws,
        games=games,
        win_rate=rate,
        wilson=wilson_interval(wins_a, games),
        elo=elo_delta(rate),
        z=z_test(wins_a, games),
        truncation_rate=sum(o.truncated for o in outcomes) / games,
        mean_episode_length=float(np.mean([o.steps for o in outcomes])),
        mean_score_diff=float(
            np.mean([o.scores[1] - o.scores[0] for o in outcomes])
        ),
    )


def net_agent(net: MuZeroNet, simulations: int = 200):
    """Greedy evaluation actor: no exploration noise, argmax visits."""
    rng = np.random.default_rng(0)  # unused without noise; fixed for safety

    def act(state: GameState, _rng) -> int:
        result = search.run_mcts(
            net, state, ego=state.current_player,
            num_simulations=simulations, rng=rng, add_noise=False,
        )
        return search.select_action(result.visit_counts, temperature=0.0)

    return act


def bot_agent(policy: bots_mod.BotPolicy):
    def act(state: GameState, rng) -> int:
        return bots_mod.bot_act(policy, state, rng)

    return act


def play_game(
    agent_first,
    agent_second,
    seed: int,
    num_players: int = 2,
    rules: Rules = DEFAULT_RULES,
) -> GameOutcome:
    """Plays one game with `agent_first` at seat 0. Truncated games are still
    decided by the final score (the engine folds the open round in)."""
    state = new_game(num_players, seed, rules)
    agents = [agent_first, agent_second]
    rng = CounterRng(seed ^ 0xE7A1)
    steps = 0
    while not state.game_over:
        action = agents[state.current_player](state, rng)
        state, _ = apply_action(state, action)
        steps += 1
    scores = state.cumulative_scores
    if scores[0] == scores[1]:
        winner = -1
    else:
        winner = 0 if scores[0] < scores[1] else 1
    return GameOutcome(
        winner_slot=winner,
        scores=tuple(scores),
        steps=steps,
        truncated=state.truncated,
    )


def head_to_head(
    agent_a,
    agent_b,
    games: int = 200,
    seeds: list[int] | None = None,
    num_players: int = 2,
    rules: Rules = DEFAULT_RULES,
) -> MatchReport:
    """Paired-seed match: game 2i seats A first on seeds[i], game 2i+1 replays
    the same seed with seats swapped."""
    if seeds is None:
        seeds = list(range((games + 1) // 2))
    if len(seeds) < (games + 1) // 2:
        raise EvalError("not enough seeds for the requested games")
    wins_a = wins_b = draws = 0
    outcomes: list[GameOutcome] = []
    for i in range(games):
        seed = seeds[i // 2]
        a_first = i % 2 == 0
        first, second = (agent_a, agent_b) if a_first else (agent_b, agent_a)
        out = play_game(first, second, seed, num_players, rules)
        if not a_first:  # normalize scores into (a, b) order
            out = GameOutcome(
                winner_slot=-1 if out.winner_slot < 0 else 1 - out.winner_slot,
                scores=tuple(reversed(out.scores)),
                steps=out.steps,
                truncated=out.truncated,
            )
        outcomes.append(out)
        if out.winner_slot == -1:
            draws += 1
        elif out.winner_slot == 0:
            wins_a += 1
        else:
            wins_b += 1
    return _report(wins_a, wins_b, draws, outcomes)


def bot_eval(
    agent,
    roster: list[str] | None = None,
    games_per_bot: int = 100,
    seeds: list[int] | None = None,
) -> dict:
    """Aggregate match of `agent` against the scripted roster. Returns the
    per-bot reports plus pooled summary statistics."""
    names = roster if roster is not None else list(bots_mod.CURRICULUM_NAMES)
    reports: dict[str, MatchReport] = {}
    for name in names:
        reports[name] = head_to_head(
            agent,
            bot_agent(bots_mod.make_bot(name)),
            games=games_per_bot,
            seeds=seeds,
        )
    games = sum(r.games for r in reports.values())
    wins = sum(r.wins_a for r in reports.values())
    return {
        "per_bot": reports,
        "games": games,
        "win_rate": wins / games,
        "mean_score_diff": float(
            np.mean([r.mean_score_diff for r in reports.values()])
        ),
        "truncation_rate": float(
            np.mean([r.truncation_rate for r in reports.values()])
        ),
        "mean_episode_length": float(
            np.mean([r.mean_episode_length for r in reports.values()])
        ),
    }


# -- linear probes -----------------------------------------------------------


@dataclass(frozen=True)
class ProbeResult:
    r2: float
    flagged: bool  # degenerate (zero-variance) target


def linear_probe(
    latents: np.ndarray,
    targets: np.ndarray,
    alpha: float = RIDGE_ALPHA,
    folds: int = PROBE_FOLDS,
    seed: int = 0,
) -> ProbeResult:
    """Ridge regression from standardized latents to a scalar feature,
    reported as held-out R^2 averaged over k folds. Negative values mean the
    probe does worse than predicting the fold mean."""
    X = np.asarray(latents, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if X.shape[0] != y.shape[0]:
        raise EvalError("latents and targets disagree in length")
    if X.shape[0] < 2 * folds:
        raise EvalError("too few samples for cross-validation")
    if np.var(y) == 0.0:
        return ProbeResult(r2=0.0, flagged=True)

    rng = np.random.default_rng(seed)
    order = rng.permutation(X.shape[0])
    fold_ids = np.array_split(order, folds)
    scores = []
    for k in range(folds):
        test = fold_ids[k]
        train = np.concatenate([fold_ids[j] for j in range(folds) if j != k])
        mu = X[train].mean(axis=0)
        sd = X[train].std(axis=0)
        sd[sd == 0] = 1.0
        Xtr = (X[train] - mu) / sd
        Xte = (X[test] - mu) / sd
        ym = y[train].mean()
        w = np.linalg.solve(
            Xtr.T @ Xtr + alpha * np.eye(X.shape[1]), Xtr.T @ (y[train] - ym)
        )
        pred = Xte @ w + ym
        resid = float(((y[test] - pred) ** 2).sum())
        total = float(((y[test] - y[test].mean()) ** 2).sum())
        if total == 0.0:
            continue  # degenerate fold; skip rather than divide by zero
        scores.append(1.0 - resid / total)
    if not scores:
        return ProbeResult(r2=0.0, flagged=True)
    return ProbeResult(r2=float(np.mean(scores)), flagged=False)


PROBE_FEATURES = (
    "own_face_down_count",
    "deck_size",
    "visible_card_sum",
    "own_hidden_sum",
    "opponent_hidden_sum",
    "score_advantage",
    "opponent_face_down_count",  # seventh feature: opponent information deficit
)


def probe_features(state: GameState, ego: int) -> dict[str, float]:
    """Ground-truth scalar features probed against the latent."""
    own = state.grids[ego]
    others = [state.grids[p] for p in range(state.num_players) if p != ego]

    def hidden_sum(grid):
        return sum(
            grid.cards[p]
            for p in range(12)
            if not grid.removed[p] and not grid.face_up[p]
        )

    own_total = state.cumulative_scores[ego] + own.full_score()
    opp_totals = [
        state.cumulative_scores[p] + state.grids[p].full_score()
        for p in range(state.num_players)
        if p != ego
    ]
    return {
        "own_face_down_count": float(len(own.face_down_positions())),
        "deck_size": float(len(state.deck)),
        "visible_card_sum": float(own.visible_score()),
        "own_hidden_sum": float(hidden_sum(own)),
        "opponent_hidden_sum": float(sum(hidden_sum(g) for g in others)),
        "score_advantage": float(min(opp_totals) - own_total),
        "opponent_face_down_count": float(
            sum(len(g.face_down_positions()) for g in others)
        ),
    }


@dataclass
class ProbeReport:
    num_games: int
    num_steps: int
    results: dict[str, dict[str, ProbeResult]]  # feature -> latent kind -> R^2


def probe_suite(
    net: MuZeroNet,
    games: int = 150,
    num_players: int = 2,
    seed: int = 0,
    batch_size: int = 64,
) -> ProbeReport:
    """Collects (latent, feature) pairs from scripted games and fits a ridge
    probe per feature against both the raw latent ("pre_ego") and the
    ego-conditioned latent ("post_ego")."""
    roster = bots_mod.bot_roster()
    observations: list[encoding.TokenSequence] = []
    current_seats: list[int] = []
    feature_rows: list[dict[str, float]] = []
    for g in range(games):
        state = new_game(num_players, seed + g)
        rng = CounterRng(seed + g)
        policies = [roster[(g + p) % len(roster)] for p in range(num_players)]
        while not state.game_over:
            ego = state.current_player
            observations.append(encoding.encode_observation(state, ego))
            current_seats.append(0)  # mover's own view: current seat is ego
            feature_rows.append(probe_features(state, ego))
            action = bots_mod.bot_act(policies[ego], state, rng)
            state, _ = apply_action(state, action)

    pre = np.zeros((len(observations), net.cfg.latent_dim))
    post = np.zeros_like(pre)
    for lo in range(0, len(observations), batch_size):
        chunk = observations[lo : lo + batch_size]
        h = net.represent(chunk)
        size = len(chunk)
        hc = net.ego_condition(
            h,
            np.zeros(size, dtype=np.int64),
            np.array(current_seats[lo : lo + size], dtype=np.int64),
            np.full(size, num_players, dtype=np.int64),
        )
        pre[lo : lo + size] = h.data
        post[lo : lo + size] = hc.data

    results: dict[str, dict[str, ProbeResult]] = {}
    for name in PROBE_FEATURES:
        y = np.array([row[name] for row in feature_rows])
        results[name] = {
            "pre_ego": linear_probe(pre, y),
            "post_ego": linear_probe(post, y),
        }
    return ProbeReport(
        num_games=games, num_steps=len(observations), results=results
    )
