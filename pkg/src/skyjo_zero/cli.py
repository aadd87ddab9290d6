"""Command-line front end: train / selfplay / eval-bots / h2h / probe /
serve / play.

Every subcommand takes --seed so runs are reproducible end to end. The
heavy lifting lives in the library modules; this file only parses
arguments, wires objects together, and prints reports.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import engine, evalstats, trainer
from .autodiff import AdamW
from .engine import DEFAULT_RULES, Rules
from .nets import MuZeroNet, NetConfig
from .service import CHECKPOINT_DIR_ENV, SessionManager, view_from_state


def _load_train_config(path: str | None, toy: bool) -> trainer.TrainConfig:
    overrides = {}
    if path is not None:
        overrides = json.loads(Path(path).read_text())
        allowed = {f.name for f in dataclasses.fields(trainer.TrainConfig)}
        unknown = set(overrides) - allowed
        if unknown:
            raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    if toy:
        return trainer.TrainConfig.toy(**overrides)
    return trainer.TrainConfig(**overrides)


def _load_net(checkpoint: str | None, seed: int, toy: bool = False) -> MuZeroNet:
    if checkpoint is not None:
        return MuZeroNet.load(checkpoint)
    cfg = NetConfig.toy() if toy else NetConfig()
    return MuZeroNet(cfg, seed=seed)


def format_report(label: str, report: evalstats.MatchReport) -> str:
    lo, hi = report.wilson
    return (
        f"{label}: {report.wins_a}/{report.games} wins "
        f"(wr={report.win_rate:.3f}, 95% CI [{lo:.3f}, {hi:.3f}], "
        f"elo={report.elo:+.0f}, z={report.z:+.2f}, "
        f"trunc={report.truncation_rate:.2f}, "
        f"len={report.mean_episode_length:.0f})"
    )


# -- subcommands -------------------------------------------------------------


def cmd_train(args) -> int:
    config = _load_train_config(args.config, args.toy)
    if args.mode == "baseline":
        # baseline ablation: no auxiliary heads, no ego conditioning
        config = dataclasses.replace(config, belief="off")
    net = _load_net(args.checkpoint, args.seed, toy=args.toy)
    if args.mode == "baseline":
        net.set_ablation("ego_off")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    optimizer = AdamW(net.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    buffer = trainer.ReplayBuffer(config.buffer_capacity, config.warmup_episodes)
    pool = trainer.OpponentPool(config.pool_max)
    rng = np.random.default_rng(args.seed)
    for iteration in range(args.iterations):
        row = trainer.train_iteration(
            net, buffer, optimizer, config, iteration,
            pool=pool, rng=rng,
            metrics_path=out / "metrics.csv",
            checkpoint_dir=out / "checkpoints",
        )
        print(
            f"iter {iteration:4d}  episodes={row['buffer_episodes']:5d}  "
            f"loss={row['loss_total']}"
        )
    return 0


def cmd_selfplay(args) -> int:
    config = _load_train_config(args.config, args.toy)
    net = _load_net(args.checkpoint, args.seed, toy=args.toy)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.episodes):
        seed = args.seed + i
        episode = trainer.self_play_episode(net, config, seed, iteration=0)
        actions = [step.action for step in episode.steps]
        blob = engine.save_replay(config.num_players, episode.seed, actions)
        path = out / f"replay_{seed:06d}.json"
        path.write_bytes(blob)
        print(f"{path}  steps={len(actions)}  scores={episode.final_scores}")
    return 0


def cmd_eval_bots(args) -> int:
    if args.bot is not None:
        from .bots import make_bot

        agent = evalstats.bot_agent(make_bot(args.bot))
        label = args.bot
    else:
        net = _load_net(args.checkpoint, args.seed, toy=True)
        agent = evalstats.net_agent(net, simulations=args.simulations)
        label = args.checkpoint or "fresh-net"
    seeds = list(range(args.seed, args.seed + args.games_per_bot))
    agg = evalstats.bot_eval(agent, games_per_bot=args.games_per_bot, seeds=seeds)
    for bot_name, report in sorted(agg["per_bot"].items()):
        print(format_report(f"{label} vs {bot_name}", report))
    print(
        f"aggregate: wr={agg['win_rate']:.3f} over {agg['games']} games, "
        f"trunc={agg['truncation_rate']:.2f}, "
        f"mean_len={agg['mean_episode_length']:.0f}"
    )
    return 0


def cmd_h2h(args) -> int:
    net_a = MuZeroNet.load(args.checkpoint_a)
    net_b = MuZeroNet.load(args.checkpoint_b)
    agent_a = evalstats.net_agent(net_a, simulations=args.simulations)
    agent_b = evalstats.net_agent(net_b, simulations=args.simulations)
    seeds = list(range(args.seed, args.seed + (args.games + 1) // 2))
    rules = (
        Rules(step_cap=args.step_cap) if args.step_cap is not None else DEFAULT_RULES
    )
    report = evalstats.head_to_head(
        agent_a, agent_b, games=args.games, seeds=seeds, rules=rules
    )
    print(format_report(f"{args.checkpoint_a} vs {args.checkpoint_b}", report))
    return 0


def cmd_probe(args) -> int:
    net = _load_net(args.checkpoint, args.seed, toy=True)
    report = evalstats.probe_suite(net, games=args.games, seed=args.seed)
    print(f"probe suite: {report.num_games} games, {report.num_steps} positions")
    for feature in evalstats.PROBE_FEATURES:
        pre = report.results[feature]["pre_ego"]
        post = report.results[feature]["post_ego"]
        flag = " (zero-variance)" if pre.flagged or post.flagged else ""
        print(f"  {feature:28s} pre={pre.r2:+.3f}  post={post.r2:+.3f}{flag}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_app

    manager = SessionManager(checkpoint_dir=args.checkpoint_dir)
    if manager.checkpoint_dir is None:
        print(
            f"warning: no checkpoint dir ({CHECKPOINT_DIR_ENV} unset); "
            "only preregistered checkpoints will resolve",
            file=sys.stderr,
        )
    uvicorn.run(build_app(manager), host=args.host, port=args.port)
    return 0


def _render_view(view: dict) -> str:
    lines = []
    for idx, grid in enumerate(view["grids"]):
        who = "you" if idx == 0 else f"opp{idx}"
        rows = []
        for r in range(3):
            cells = []
            for c in range(4):
                cell = grid[r * 4 + c]
                if cell["removed"]:
                    cells.append("  .")
                elif cell["value"] is None:
                    cells.append("  #")
                else:
                    cells.append(f"{cell['value']:3d}")
            rows.append(" ".join(cells))
        lines.append(f"{who}:")
        lines.extend("  " + row for row in rows)
    lines.append(
        f"discard={view['discard_top']}  deck={view['deck_size']}  "
        f"drawn={view['drawn_card']}  scores={view['cumulative_scores']}"
    )
    legal = [i for i, ok in enumerate(view["legal_mask"]) if ok]
    if legal:
        lines.append(f"legal actions: {legal}")
    return "\n".join(lines)


def cmd_play(args) -> int:
    """Terminal fallback client: plays one session over stdin/stdout."""
    manager = SessionManager(default_simulations=args.simulations)
    net = _load_net(args.checkpoint, args.seed, toy=True)
    manager.register_checkpoint("local", net)
    session, events = manager.create_session(
        num_players=args.players, human_seat=0, checkpoint="local", seed=args.seed
    )
    print(f"session {session.session_id} (seed {session.seed})")
    while True:
        for event in events:
            if event["type"] == "agent_move":
                print(f"seat {event['seat']} plays action {event['action']}")
            elif event["type"] == "terminal":
                print(_render_view(event["view"]))
                print(f"final scores: {event['cumulative_scores']}")
                print(f"ranking: {event['ranking']['ranks']}")
                return 0
        print(_render_view(view_from_state(session.state, session.human_seat)))
        try:
            raw = input("action> ").strip()
        except EOFError:
            return 0
        if raw in ("q", "quit", ""):
            return 0
        try:
            action = int(raw)
        except ValueError:
            print("enter an action index (0-15) or q")
            continue
        events = manager.submit_action(session.session_id, action)
        for event in events:
            if event["type"] == "reject":
                print(f"rejected: {event['reason']}")


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skyjo-zero")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(fn=fn)
        return p

    p = add("train", cmd_train, help="run self-play training iterations")
    p.add_argument("--config", help="JSON file of TrainConfig overrides")
    p.add_argument("--mode", choices=("belief", "baseline"), default="belief")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--out", default="runs/default")
    p.add_argument("--checkpoint", help="resume from this checkpoint")
    p.add_argument("--toy", action="store_true", help="tiny net + toy config")

    p = add("selfplay", cmd_selfplay, help="generate self-play replay files")
    p.add_argument("--config", help="JSON file of TrainConfig overrides")
    p.add_argument("--checkpoint")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--out", default="replays")
    p.add_argument("--toy", action="store_true")

    p = add("eval-bots", cmd_eval_bots, help="evaluate an agent vs the bot roster")
    p.add_argument("--checkpoint")
    p.add_argument("--bot", help="evaluate a scripted bot instead of a net")
    p.add_argument("--games-per-bot", type=int, default=100)
    p.add_argument("--simulations", type=int, default=200)

    p = add("h2h", cmd_h2h, help="paired-seed head-to-head between checkpoints")
    p.add_argument("checkpoint_a")
    p.add_argument("checkpoint_b")
    p.add_argument("--games", type=int, default=200)
    p.add_argument("--simulations", type=int, default=200)
    p.add_argument("--step-cap", type=int, default=None)

    p = add("probe", cmd_probe, help="linear probes over latent features")
    p.add_argument("--checkpoint")
    p.add_argument("--games", type=int, default=150)

    p = add("serve", cmd_serve, help="run the arena websocket service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--checkpoint-dir", help=f"defaults to ${CHECKPOINT_DIR_ENV}")

    p = add("play", cmd_play, help="terminal fallback client")
    p.add_argument("--checkpoint")
    p.add_argument("--players", type=int, default=2)
    p.add_argument("--simulations", type=int, default=50)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
