"""
Inside the search and the belief heads
======================================

Runs MCTS from a fresh position with an (untrained) network, prints the visit
distribution over the legal actions, and reads the winner head and the linear
probes that check what the latent state knows about hidden cards.
"""

import numpy as np

from skyjo_zero import encoding
from skyjo_zero.engine import legal_actions, new_game
from skyjo_zero.evalstats import PROBE_FEATURES, probe_suite
from skyjo_zero.nets import MuZeroNet, NetConfig
from skyjo_zero.search import run_mcts, simulation_count

net = MuZeroNet(NetConfig.toy(max_players=4), seed=0)
state = new_game(2, seed=3)

# the simulation budget follows the training schedule; early iterations
# search shallow
print("budget at iteration 0:", simulation_count(0))

result = run_mcts(
    net, state, ego=state.current_player, num_simulations=64,
    rng=np.random.default_rng(0),
)
print("root value:", round(result.root_value, 3))
for a, ok in enumerate(legal_actions(state)):
    if ok:
        print(f"  action {a:2d}: {result.visit_counts[a]:3d} visits, "
              f"pi={result.policy[a]:.3f}")

# winner head, ego-conditioned on the player to move
obs = encoding.encode_observation(state, state.current_player)
h = net.represent([obs])
hc = net.ego_condition(h, [0], [0], [2])
logits = net.winner_logits(hc, 2).data[0]
probs = np.exp(logits - logits.max())
probs /= probs.sum()
print("winner probabilities (ego first):", np.round(probs, 3))

# linear probes: with an untrained net these hover near zero, which is the
# point -- the belief signal has to be learned
report = probe_suite(net, games=3, seed=0)
print(f"\nprobes over {report.num_steps} positions:")
for feature in PROBE_FEATURES:
    pre = report.results[feature]["pre_ego"].r2
    post = report.results[feature]["post_ego"].r2
    print(f"  {feature:28s} pre={pre:+.3f}  post={post:+.3f}")
