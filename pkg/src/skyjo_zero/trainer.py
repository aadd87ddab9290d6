"""Self-play training loop: episode generation, replay buffer, unroll targets
and the combined loss.

An episode stores full ground-truth state snapshots so one game can be
re-observed from every seat (perspective augmentation): the same trajectory
yields a training position per player, each with its own masked observation,
ego-conditioned value and belief targets.

Rewards are terminal margins: at the last transition each player receives
clip(min opponent cumulative - own cumulative, +-200), zero elsewhere. Value
targets are n-step returns bootstrapped with the stored search value when the
searching seat matches the training ego, otherwise with the discounted
Monte-Carlo return.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bots as bots_mod
from . import encoding, search
from .autodiff import AdamW, Tensor, clip_grad_norm, mul, softmax_xent
from .engine import (
    ACTION_COUNT,
    CounterRng,
    GameState,
    Phase,
    Ranking,
    apply_action,
    is_terminal,
    new_game,
)
from .nets import MuZeroNet, scalar_to_support

UNROLL_STEPS = 8
TD_STEPS = 10
DISCOUNT = 0.997
REWARD_CLIP = 200

# Belief-loss weight ramps: linear from start to end over the first 500
# training iterations, flat afterwards.
ALPHA_RAMP = (0.1, 0.5)
BETA_RAMP = (0.1, 0.25)
RAMP_ITERATIONS = 500

STRATIFIED_FLOOR = 0.10  # minimum batch share per decision phase


def belief_weights(iteration: int) -> tuple[float, float]:
    frac = min(max(iteration / RAMP_ITERATIONS, 0.0), 1.0)
    alpha = ALPHA_RAMP[0] + frac * (ALPHA_RAMP[1] - ALPHA_RAMP[0])
    beta = BETA_RAMP[0] + frac * (BETA_RAMP[1] - BETA_RAMP[0])
    return alpha, beta


@dataclass
class TrainConfig:
    num_players: int = 2
    episodes_per_iteration: int = 32
    train_steps_per_iteration: int = 96
    batch_size: int = 64
    lr: float = 3e-4
    weight_decay: float = 1e-4
    buffer_capacity: int = 10_000
    warmup_episodes: int = 500
    unroll_steps: int = UNROLL_STEPS
    td_steps: int = TD_STEPS
    discount: float = DISCOUNT
    grad_clip: float = 5.0
    snapshot_interval: int = 25
    pool_max: int = 20
    bot_cutover: int = 100  # iterations played against scripted bots
    pool_current_prob: float = 0.7
    temperature_moves: int = 30  # sampled moves before switching to argmax
    simulations: int | None = None  # None: budget follows the iteration schedule
    belief: str = "ramp"  # "ramp" or "off" (auxiliary heads unweighted)
    reward_mode: str = "margin"  # "margin" (score differential) or "winloss" (+-1)

    @classmethod
    def toy(cls, **overrides) -> "TrainConfig":
        base = dict(
            episodes_per_iteration=2,
            train_steps_per_iteration=4,
            batch_size=8,
            buffer_capacity=64,
            warmup_episodes=2,
            unroll_steps=3,
            td_steps=4,
            snapshot_interval=2,
            pool_max=3,
            bot_cutover=1,
            temperature_moves=6,
            simulations=8,
        )
        base.update(overrides)
        return cls(**base)


@dataclass
class EpisodeStep:
    state: GameState  # snapshot before the action (ground truth, cloned)
    current_player: int
    action: int
    visit_policy: np.ndarray  # (16,)
    root_value: float
    searched: bool  # False for scripted-opponent moves (one-hot policy)
    rewards: np.ndarray = field(default=None)  # (num_players,), filled at end


@dataclass
class Episode:
    num_players: int
    seed: int
    steps: list[EpisodeStep] = field(default_factory=list)
    final_scores: tuple[int, ...] = ()
    ranking: Ranking | None = None
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.steps)

    def winners(self) -> list[int]:
        best = min(self.ranking.ranks)
        return [p for p, r in enumerate(self.ranking.ranks) if r == best]


def terminal_rewards(
    scores, num_players: int, mode: str = "margin"
) -> np.ndarray:
    """Per-player terminal reward. "margin": min opponent total minus own
    total, clipped to the value support (positive = beat everyone).
    "winloss": the sign of that margin (+1 win, -1 loss, 0 exact tie)."""
    out = np.zeros(num_players, dtype=np.float64)
    for p in range(num_players):
        others = min(scores[q] for q in range(num_players) if q != p)
        out[p] = float(np.clip(others - scores[p], -REWARD_CLIP, REWARD_CLIP))
    if mode == "winloss":
        return np.sign(out)
    if mode != "margin":
        raise ValueError(f"unknown reward mode: {mode!r}")
    return out


def finalize_episode(
    episode: Episode, final_state: GameState, reward_mode: str = "margin"
) -> Episode:
    ranking = is_terminal(final_state)
    if ranking is None:
        raise ValueError("episode did not reach a terminal state")
    episode.ranking = ranking
    episode.final_scores = tuple(final_state.cumulative_scores)
    episode.truncated = final_state.truncated
    margins = terminal_rewards(
        final_state.cumulative_scores, episode.num_players, reward_mode
    )
    for i, step in enumerate(episode.steps):
        if i == len(episode.steps) - 1:
            step.rewards = margins
        else:
            step.rewards = np.zeros(episode.num_players, dtype=np.float64)
    return episode


@dataclass
class TrainingTarget:
    observation: encoding.TokenSequence
    current_seat: int  # root current player relative to ego, frozen in unroll
    num_players: int
    actions: np.ndarray  # (K,)
    target_policies: np.ndarray  # (K+1, 16)
    policy_mask: np.ndarray  # (K+1,) 1.0 on real steps
    target_values: np.ndarray  # (K+1,)
    target_rewards: np.ndarray  # (K,)
    winner_target: np.ndarray  # (num_players,) ego-rotated
    rank_target: np.ndarray  # (num_players, num_players) ego-rotated rows


def n_step_return(
    episode: Episode, ego: int, t: int, n: int, gamma: float
) -> float:
    """Discounted n-step return for `ego` from position t.

    Bootstraps with the stored root value when step t+n was searched by ego;
    otherwise falls back to the full Monte-Carlo return (rewards are terminal
    margins, so the tail sum is exact)."""
    length = len(episode.steps)
    if t >= length:
        return 0.0
    horizon = t + n
    value = 0.0
    if horizon < length:
        boot = episode.steps[horizon]
        if boot.searched and boot.current_player == ego:
            value = gamma**n * boot.root_value
        else:
            horizon = length  # MC fallback: run rewards to the end
    end = min(horizon, length)
    for i in range(t, end):
        value += gamma ** (i - t) * float(episode.steps[i].rewards[ego])
    return value


def make_targets(
    episode: Episode, ego: int, index: int, config: TrainConfig
) -> TrainingTarget:
    n_players = episode.num_players
    K = config.unroll_steps
    length = len(episode.steps)
    root = episode.steps[index]

    actions = np.zeros(K, dtype=np.int64)
    policies = np.zeros((K + 1, ACTION_COUNT), dtype=np.float64)
    mask = np.zeros(K + 1, dtype=np.float64)
    values = np.zeros(K + 1, dtype=np.float64)
    rewards = np.zeros(K, dtype=np.float64)

    for k in range(K + 1):
        t = index + k
        if t < length:
            step = episode.steps[t]
            policies[k] = step.visit_policy
            mask[k] = 1.0
            values[k] = n_step_return(episode, ego, t, config.td_steps, config.discount)
            if k < K:
                actions[k] = step.action
                rewards[k] = float(step.rewards[ego])
        else:
            # absorbing padding: action 0, zero reward/value, uniform policy
            # row excluded from the loss via the mask
            policies[k] = 1.0 / ACTION_COUNT

    winners = episode.winners()
    winner = np.zeros(n_players, dtype=np.float64)
    rank = np.zeros((n_players, n_players), dtype=np.float64)
    for player in range(n_players):
        seat = (player - ego) % n_players
        if player in winners:
            winner[seat] = 1.0 / len(winners)
        rank[seat, episode.ranking.ranks[player] - 1] = 1.0

    return TrainingTarget(
        observation=encoding.encode_observation(root.state, ego),
        current_seat=(root.current_player - ego) % n_players,
        num_players=n_players,
        actions=actions,
        target_policies=policies,
        policy_mask=mask,
        target_values=values,
        target_rewards=rewards,
        winner_target=winner,
        rank_target=rank,
    )


class ReplayBuffer:
    """Ring buffer of complete episodes with phase-stratified sampling."""

    def __init__(self, capacity: int = 10_000, warmup: int = 500) -> None:
        self.capacity = capacity
        self.warmup = warmup
        self.episodes: list[Episode] = []
        self._next = 0
        self._phase_index: dict[int, list[tuple[int, int]]] | None = None

    def add(self, episode: Episode) -> None:
        if episode.ranking is None:
            raise ValueError("only finalized episodes enter the buffer")
        if len(self.episodes) < self.capacity:
            self.episodes.append(episode)
        else:
            self.episodes[self._next] = episode
            self._next = (self._next + 1) % self.capacity
        self._phase_index = None  # lazily rebuilt on next sample

    @property
    def num_episodes(self) -> int:
        return len(self.episodes)

    @property
    def num_steps(self) -> int:
        return sum(len(e) for e in self.episodes)

    def ready(self) -> bool:
        return self.num_episodes >= self.warmup

    def sample_positions(
        self, batch_size: int, rng: np.random.Generator
    ) -> list[tuple[int, int]]:
        """(episode, step) pairs, stratified so each decision phase present in
        the buffer gets at least a 10% share of the batch."""
        if self._phase_index is None:
            by_phase: dict[int, list[tuple[int, int]]] = {}
            for ei, episode in enumerate(self.episodes):
                for si, step in enumerate(episode.steps):
                    by_phase.setdefault(int(step.state.phase), []).append((ei, si))
            self._phase_index = by_phase
        by_phase = self._phase_index
        if not by_phase:
            raise ValueError("empty buffer")
        floor = max(1, int(math.floor(STRATIFIED_FLOOR * batch_size)))
        picks: list[tuple[int, int]] = []
        for positions in by_phase.values():
            idx = rng.integers(0, len(positions), size=min(floor, batch_size))
            picks.extend(positions[i] for i in idx)
        everything = [p for positions in by_phase.values() for p in positions]
        while len(picks) < batch_size:
            picks.append(everything[rng.integers(0, len(everything))])
        rng.shuffle(picks)
        return picks[:batch_size]

    def sample_batch(
        self, config: TrainConfig, rng: np.random.Generator
    ) -> list[TrainingTarget]:
        positions = self.sample_positions(config.batch_size, rng)
        batch = []
        for ei, si in positions:
            episode = self.episodes[ei]
            ego = int(rng.integers(0, episode.num_players))  # perspective draw
            batch.append(make_targets(episode, ego, si, config))
        return batch


def _masked_xent(logits, targets: np.ndarray, mask: np.ndarray):
    """Mean CE over unmasked rows; masked rows contribute exactly zero."""
    rows = targets.shape[0]
    active = float(mask.sum())
    if active == 0:
        return Tensor(np.zeros(()))
    masked = targets * mask[:, None]
    # softmax_xent averages over all rows; rescale to a mean over active rows
    return mul(softmax_xent(logits, masked), rows / active)


def muzero_loss(net: MuZeroNet, batch: list[TrainingTarget], config: TrainConfig):
    """Unrolled policy/value/reward loss. Returns (loss, parts, conditioned)
    where `conditioned` is the list of ego-conditioned latents per unroll step
    for the belief heads to reuse."""
    B = len(batch)
    K = config.unroll_steps
    n = batch[0].num_players
    support = net.cfg.support_max

    obs = [t.observation for t in batch]
    actions = np.stack([t.actions for t in batch])  # (B, K)
    policies = np.stack([t.target_policies for t in batch])  # (B, K+1, 16)
    masks = np.stack([t.policy_mask for t in batch])  # (B, K+1)
    values = np.stack([t.target_values for t in batch])  # (B, K+1)
    rewards = np.stack([t.target_rewards for t in batch])  # (B, K)
    ego_idx = np.zeros(B, dtype=np.int64)  # observations are ego-rotated
    cur_idx = np.array([t.current_seat for t in batch], dtype=np.int64)
    n_idx = np.full(B, n, dtype=np.int64)

    h = net.represent(obs)
    policy_loss = None
    value_loss = None
    reward_loss = None
    conditioned = []

    def acc(total, term):
        return term if total is None else total + term

    for k in range(K + 1):
        hc = net.ego_condition(h, ego_idx, cur_idx, n_idx)
        conditioned.append(hc)
        policy_logits, value_logits = net.predict(hc)
        policy_loss = acc(
            policy_loss,
            _masked_xent(policy_logits, policies[:, k].astype(np.float32), masks[:, k]),
        )
        value_target = scalar_to_support(values[:, k], support)
        value_loss = acc(value_loss, softmax_xent(value_logits, value_target))
        if k < K:
            h, reward_logits = net.dynamics(h, actions[:, k])
            reward_target = scalar_to_support(rewards[:, k], support)
            reward_loss = acc(reward_loss, softmax_xent(reward_logits, reward_target))

    total = policy_loss + value_loss + reward_loss
    parts = {
        "policy": float(policy_loss.data),
        "value": float(value_loss.data),
        "reward": float(reward_loss.data),
    }
    return total, parts, conditioned


def belief_loss(net: MuZeroNet, batch: list[TrainingTarget], conditioned):
    """Winner and rank cross-entropies averaged over the unroll steps."""
    n = batch[0].num_players
    winner_targets = np.stack([t.winner_target for t in batch]).astype(np.float32)
    rank_targets = np.stack([t.rank_target for t in batch]).astype(np.float32)
    winner = None
    rank = None
    for hc in conditioned:
        w = softmax_xent(net.winner_logits(hc, n), winner_targets)
        r = softmax_xent(net.rank_logits(hc, n), rank_targets)
        winner = w if winner is None else winner + w
        rank = r if rank is None else rank + r
    scale = 1.0 / len(conditioned)
    return mul(winner, scale), mul(rank, scale)


def total_loss(
    net: MuZeroNet,
    batch: list[TrainingTarget],
    config: TrainConfig,
    iteration: int,
):
    base, parts, conditioned = muzero_loss(net, batch, config)
    if config.belief == "off":
        alpha = beta = 0.0
    else:
        alpha, beta = belief_weights(iteration)
    parts["alpha"] = alpha
    parts["beta"] = beta
    if alpha == 0.0 and beta == 0.0:
        # baseline: bit-identical to the plain loss, heads untouched
        parts["winner"] = 0.0
        parts["rank"] = 0.0
        parts["total"] = float(base.data)
        return base, parts
    winner, rank = belief_loss(net, batch, conditioned)
    loss = base + mul(winner, alpha) + mul(rank, beta)
    parts["winner"] = float(winner.data)
    parts["rank"] = float(rank.data)
    parts["total"] = float(loss.data)
    return loss, parts


def train_step(
    net: MuZeroNet,
    optimizer: AdamW,
    batch: list[TrainingTarget],
    config: TrainConfig,
    iteration: int,
) -> dict:
    optimizer.zero_grad()
    loss, parts = total_loss(net, batch, config, iteration)
    loss.backward()
    parts["grad_norm"] = clip_grad_norm(optimizer.params, config.grad_clip)
    optimizer.step()
    return parts


# -- self-play ---------------------------------------------------------------


@dataclass
class OpponentPool:
    """FIFO pool of frozen parameter snapshots used as self-play opponents."""

    max_size: int = 20
    snapshots: list[tuple[int, dict]] = field(default_factory=list)

    def add(self, net: MuZeroNet, iteration: int) -> None:
        payload = {p.name: p.data.copy() for p in net.parameters()}
        self.snapshots.append((iteration, payload))
        if len(self.snapshots) > self.max_size:
            self.snapshots.pop(0)

    def materialize(self, idx: int, like: MuZeroNet) -> MuZeroNet:
        _, payload = self.snapshots[idx]
        net = MuZeroNet(like.cfg)
        for p in net.parameters():
            p.data = payload[p.name].copy()
        net.set_ablation(like.ablation)
        return net


def _mcts_move(net, state, sims, rng, temperature_moves, move_index):
    result = search.run_mcts(
        net, state, ego=state.current_player, num_simulations=sims,
        rng=rng, add_noise=True,
    )
    temperature = 1.0 if move_index < temperature_moves else 0.0
    action = search.select_action(result.visit_counts, temperature, rng)
    return action, result


def self_play_episode(
    net: MuZeroNet,
    config: TrainConfig,
    seed: int,
    iteration: int = 0,
    pool: OpponentPool | None = None,
    bots: bool | None = None,
) -> Episode:
    """One complete game. The learner sits at seat (seed % num_players); the
    other seats are scripted bots before the cutover iteration, then a 70/30
    mix of the current network and pool snapshots."""
    rng = np.random.default_rng(seed)
    bot_rng = CounterRng(seed ^ 0xB07)
    state = new_game(config.num_players, seed)
    learner_seat = seed % config.num_players
    use_bots = bots if bots is not None else iteration < config.bot_cutover
    sims = config.simulations or search.simulation_count(iteration)

    opponents: dict[int, object] = {}
    roster = bots_mod.bot_roster()
    for seat in range(config.num_players):
        if seat == learner_seat:
            continue
        if use_bots:
            opponents[seat] = roster[int(rng.integers(0, len(roster)))]
        elif pool and pool.snapshots and rng.random() > config.pool_current_prob:
            opponents[seat] = pool.materialize(
                int(rng.integers(0, len(pool.snapshots))), net
            )
        else:
            opponents[seat] = net

    episode = Episode(num_players=config.num_players, seed=seed)
    move_index = 0
    while not state.game_over:
        actor = state.current_player
        snapshot = state.clone()
        agent = opponents.get(actor, net)
        if isinstance(agent, bots_mod.BotPolicy):
            action = bots_mod.bot_act(agent, state, bot_rng)
            policy = np.zeros(ACTION_COUNT)
            policy[action] = 1.0
            root_value, searched = 0.0, False
        else:
            action, result = _mcts_move(
                agent, state, sims, rng, config.temperature_moves, move_index
            )
            policy, root_value, searched = result.policy, result.root_value, True
        episode.steps.append(
            EpisodeStep(
                state=snapshot,
                current_player=actor,
                action=action,
                visit_policy=np.asarray(policy, dtype=np.float64),
                root_value=float(root_value),
                searched=searched,
            )
        )
        state, _ = apply_action(state, action)
        move_index += 1
    return finalize_episode(episode, state, config.reward_mode)


# -- iteration loop ----------------------------------------------------------

METRICS_FIELDS = [
    "iteration", "episodes", "buffer_episodes", "buffer_steps", "train_steps",
    "loss_total", "loss_policy", "loss_value", "loss_reward", "loss_winner",
    "loss_rank", "alpha", "beta", "grad_norm",
]


def append_metrics(path: str | Path, row: dict) -> None:
    path = Path(path)
    fresh = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_FIELDS)
        if fresh:
            writer.writeheader()
        writer.writerow({k: row.get(k, "") for k in METRICS_FIELDS})


def train_iteration(
    net: MuZeroNet,
    buffer: ReplayBuffer,
    optimizer: AdamW,
    config: TrainConfig,
    iteration: int,
    pool: OpponentPool | None = None,
    rng: np.random.Generator | None = None,
    metrics_path: str | Path | None = None,
    checkpoint_dir: str | Path | None = None,
) -> dict:
    rng = rng or np.random.default_rng(iteration)
    for i in range(config.episodes_per_iteration):
        seed = iteration * config.episodes_per_iteration + i
        buffer.add(self_play_episode(net, config, seed, iteration, pool=pool))

    stats: list[dict] = []
    steps_done = 0
    if buffer.ready():
        for _ in range(config.train_steps_per_iteration):
            batch = buffer.sample_batch(config, rng)
            stats.append(train_step(net, optimizer, batch, config, iteration))
            steps_done += 1

    def mean(key):
        return float(np.mean([s[key] for s in stats])) if stats else float("nan")

    row = {
        "iteration": iteration,
        "episodes": config.episodes_per_iteration,
        "buffer_episodes": buffer.num_episodes,
        "buffer_steps": buffer.num_steps,
        "train_steps": steps_done,
        "loss_total": mean("total"),
        "loss_policy": mean("policy"),
        "loss_value": mean("value"),
        "loss_reward": mean("reward"),
        "loss_winner": mean("winner"),
        "loss_rank": mean("rank"),
        "alpha": stats[-1]["alpha"] if stats else "",
        "beta": stats[-1]["beta"] if stats else "",
        "grad_norm": mean("grad_norm"),
    }
    if metrics_path is not None:
        append_metrics(metrics_path, row)
    if pool is not None and iteration % config.snapshot_interval == 0:
        pool.add(net, iteration)
    if checkpoint_dir is not None:
        net.save(Path(checkpoint_dir) / f"iter_{iteration:05d}")
    return row
