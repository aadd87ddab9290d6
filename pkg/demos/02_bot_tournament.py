"""
Scripted-bot round robin
========================

Every curriculum bot against every other, paired seeds with seat swaps, and
the usual match statistics (Wilson interval, Elo delta, z).
"""

from itertools import combinations

from skyjo_zero.bots import CURRICULUM_NAMES, make_bot
from skyjo_zero.evalstats import bot_agent, head_to_head

GAMES = 60  # per pairing; bump this for tighter intervals

print(f"{'match':38s} {'wr':>6s} {'95% CI':>16s} {'elo':>6s}")
for a, b in combinations(CURRICULUM_NAMES, 2):
    report = head_to_head(
        bot_agent(make_bot(a)), bot_agent(make_bot(b)), games=GAMES
    )
    lo, hi = report.wilson
    print(
        f"{a + ' vs ' + b:38s} {report.win_rate:6.3f} "
        f"[{lo:6.3f}, {hi:6.3f}] {report.elo:+6.0f}"
    )
