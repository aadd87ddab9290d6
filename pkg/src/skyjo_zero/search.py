"""Latent-space Monte Carlo tree search over the learned model.

Search runs entirely from the ego player's perspective: the root latent comes
from the ego's partial observation, every node's predictions are
ego-conditioned, and rewards/values are ego returns, so no sign flipping
happens during backup. Latent rollouts carry no legality or terminal
information; only the root is masked to legal actions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import encoding
from .engine import ACTION_COUNT, GameState
from .nets import MuZeroNet, support_to_scalar

PUCT_C1 = 1.25
PUCT_C2 = 19652.0
DIRICHLET_ALPHA = 0.3
DIRICHLET_FRACTION = 0.25
DISCOUNT = 0.997

# Simulation budget ramps with training progress.
SIM_SCHEDULE = ((200, 200), (500, 400))
SIM_FINAL = 600


def simulation_count(iteration: int) -> int:
    for threshold, sims in SIM_SCHEDULE:
        if iteration < threshold:
            return sims
    return SIM_FINAL


def puct_score(
    q_normalized: float,
    prior: float,
    parent_visits: int,
    child_visits: int,
    c1: float = PUCT_C1,
    c2: float = PUCT_C2,
) -> float:
    exploration = (
        prior
        * math.sqrt(parent_visits)
        / (1 + child_visits)
        * (c1 + math.log((parent_visits + c2 + 1) / c2))
    )
    return q_normalized + exploration


class _MinMaxStats:
    """Running bounds used to normalize Q values into [0, 1]."""

    def __init__(self) -> None:
        self.minimum = math.inf
        self.maximum = -math.inf

    def update(self, value: float) -> None:
        self.minimum = min(self.minimum, value)
        self.maximum = max(self.maximum, value)

    def normalize(self, value: float) -> float:
        if self.maximum > self.minimum:
            return (value - self.minimum) / (self.maximum - self.minimum)
        return value


class _Node:
    __slots__ = ("prior", "visit_count", "value_sum", "reward", "latent", "children")

    def __init__(self, prior: float) -> None:
        self.prior = prior
        self.visit_count = 0
        self.value_sum = 0.0
        self.reward = 0.0
        self.latent = None  # np.ndarray (latent_dim,) once expanded
        self.children: dict[int, _Node] = {}

    @property
    def expanded(self) -> bool:
        return bool(self.children)

    def value(self) -> float:
        if self.visit_count == 0:
            return 0.0
        return self.value_sum / self.visit_count


@dataclass
class SearchResult:
    visit_counts: np.ndarray  # (16,) integer visits
    root_value: float
    policy: np.ndarray = field(init=False)  # visit distribution

    def __post_init__(self) -> None:
        total = self.visit_counts.sum()
        if total > 0:
            self.policy = self.visit_counts / total
        else:
            self.policy = np.full(ACTION_COUNT, 1.0 / ACTION_COUNT)


def _predict_at(net: MuZeroNet, latent: np.ndarray, ego_seat: int, current_seat: int, n: int):
    h = net.latent_tensor(latent)
    hc = net.ego_condition(h, [ego_seat], [current_seat], [n])
    policy_logits, value_logits = net.predict(hc)
    logits = policy_logits.data[0]
    shifted = logits - logits.max()
    priors = np.exp(shifted)
    priors /= priors.sum()
    value = float(support_to_scalar(_softmax_np(value_logits.data[0]), net.cfg.support_max))
    return priors, value


def _softmax_np(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max())
    return e / e.sum()


def run_mcts(
    net: MuZeroNet,
    state: GameState,
    ego: int,
    num_simulations: int,
    rng: np.random.Generator,
    add_noise: bool = True,
    discount: float = DISCOUNT,
) -> SearchResult:
    """Search from `state` as seen by `ego`; returns root visit statistics.

    The current-player conditioning index is frozen at its root value for the
    whole latent rollout: the model has no ground-truth turn order inside
    imagined trajectories.
    """
    obs = encoding.encode_observation(state, ego)
    root_latent = net.represent([obs]).data[0]
    n = state.num_players
    ego_seat = 0  # observations are ego-rotated
    current_seat = (state.current_player - ego) % n

    legal = encoding.legal_mask(state)
    priors, root_value = _predict_at(net, root_latent, ego_seat, current_seat, n)
    mask = np.array(legal, dtype=bool)
    priors = np.where(mask, priors, 0.0)
    total = priors.sum()
    if total <= 0:
        priors = mask.astype(np.float64) / mask.sum()
    else:
        priors = priors / total

    if add_noise:
        legal_idx = np.flatnonzero(mask)
        noise = rng.dirichlet([DIRICHLET_ALPHA] * len(legal_idx))
        priors[legal_idx] = (
            (1 - DIRICHLET_FRACTION) * priors[legal_idx] + DIRICHLET_FRACTION * noise
        )

    root = _Node(prior=1.0)
    root.latent = root_latent
    for action in range(ACTION_COUNT):
        if mask[action]:
            root.children[action] = _Node(float(priors[action]))

    stats = _MinMaxStats()
    for _ in range(num_simulations):
        node = root
        path = [root]
        actions: list[int] = []
        while node.expanded:
            action, node = _select_child(node, stats)
            path.append(node)
            actions.append(action)

        parent = path[-2]
        leaf_value = _expand(net, parent, node, actions[-1], ego_seat, current_seat, n, discount)
        _backpropagate(path, leaf_value, discount, stats)

    visits = np.zeros(ACTION_COUNT, dtype=np.int64)
    for action, child in root.children.items():
        visits[action] = child.visit_count
    return SearchResult(visit_counts=visits, root_value=root.value())


def _select_child(node: _Node, stats: _MinMaxStats) -> tuple[int, _Node]:
    best_score = -math.inf
    best: tuple[int, _Node] | None = None
    for action in sorted(node.children):
        child = node.children[action]
        if child.visit_count > 0:
            q = stats.normalize(child.reward + DISCOUNT * child.value())
        else:
            q = 0.0
        score = puct_score(q, child.prior, node.visit_count, child.visit_count)
        if score > best_score:
            best_score = score
            best = (action, child)
    assert best is not None
    return best


def _expand(
    net: MuZeroNet,
    parent: _Node,
    node: _Node,
    action: int,
    ego_seat: int,
    current_seat: int,
    n: int,
    discount: float,
) -> float:
    h = net.latent_tensor(parent.latent)
    nxt, reward_logits = net.dynamics(h, np.array([action]))
    node.latent = nxt.data[0]
    node.reward = float(
        support_to_scalar(_softmax_np(reward_logits.data[0]), net.cfg.support_max)
    )
    priors, value = _predict_at(net, node.latent, ego_seat, current_seat, n)
    # interior nodes see all 16 actions: no legality info inside the latent
    for a in range(ACTION_COUNT):
        node.children[a] = _Node(float(priors[a]))
    return value


def _backpropagate(
    path: list[_Node], leaf_value: float, discount: float, stats: _MinMaxStats
) -> None:
    value = leaf_value
    for node in reversed(path):
        node.value_sum += value
        node.visit_count += 1
        stats.update(node.reward + discount * node.value())
        value = node.reward + discount * value


def select_action(
    visit_counts: np.ndarray,
    temperature: float,
    rng: np.random.Generator | None = None,
) -> int:
    """Visit-count action selection; T=0 is argmax with lowest-index ties."""
    visits = np.asarray(visit_counts, dtype=np.float64)
    if temperature == 0.0:
        return int(np.argmax(visits))  # argmax takes the first maximum
    if rng is None:
        raise ValueError("sampling temperatures need an rng")
    powered = visits ** (1.0 / temperature)
    total = powered.sum()
    if total <= 0:
        raise ValueError("no visits to sample from")
    return int(rng.choice(len(visits), p=powered / total))
