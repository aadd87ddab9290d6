"""
A tiny training run, end to end
===============================

Five toy iterations of the full loop: self-play against scripted opponents,
stratified replay sampling, the unrolled loss with the winner/rank auxiliary
heads on their ramp, and a checkpoint at the end. Takes a couple of minutes
on a laptop; nothing here is expected to play well.
"""

from pathlib import Path

import numpy as np

from skyjo_zero.autodiff import AdamW
from skyjo_zero.nets import MuZeroNet, NetConfig
from skyjo_zero.trainer import ReplayBuffer, TrainConfig, train_iteration

out = Path("runs/demo")
out.mkdir(parents=True, exist_ok=True)

config = TrainConfig.toy(bot_cutover=100)  # scripted opponents throughout
net = MuZeroNet(NetConfig.toy(max_players=4), seed=0)
optimizer = AdamW(net.parameters(), lr=1e-3, weight_decay=config.weight_decay)
buffer = ReplayBuffer(config.buffer_capacity, config.warmup_episodes)
rng = np.random.default_rng(0)

for iteration in range(5):
    row = train_iteration(
        net, buffer, optimizer, config, iteration,
        rng=rng, metrics_path=out / "metrics.csv",
    )
    print(
        f"iter {iteration}: buffer={row['buffer_steps']:4d} steps, "
        f"loss={row['loss_total']:.2f} "
        f"(policy {row['loss_policy']:.2f}, value {row['loss_value']:.2f}, "
        f"winner {row['loss_winner']:.2f}, rank {row['loss_rank']:.2f}, "
        f"alpha={float(row['alpha']):.3f})"
    )

net.save(out / "final")
print("saved checkpoint:", out / "final", "hash", net.param_hash()[:12])
print("metrics:", out / "metrics.csv")
