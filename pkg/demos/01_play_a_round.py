"""
A first look at the Skyjo engine
================================

Deals a two-player game, walks a few decisions by hand, and lets a pair of
scripted bots finish the round so we can look at the scoring.
"""

import numpy as np

from skyjo_zero.engine import (
    CounterRng,
    apply_action,
    legal_actions,
    new_game,
    state_dump,
)
from skyjo_zero.bots import bot_act, make_bot

state = new_game(num_players=2, seed=7)

# every player starts with two auto-revealed cards; the higher visible sum
# gets the first move
print(state_dump(state))
print("to move:", state.current_player)

# phase A: the only choices are take-the-discard (0) or draw blind (1)
print("legal now:", [a for a, ok in enumerate(legal_actions(state)) if ok])

state, _ = apply_action(state, 1)  # draw from the deck
print("drew:", state.drawn_card)

# phase B: keep it (2) or discard and flip a face-down card instead (3)
state, _ = apply_action(state, 2)

# phase C: pick a grid cell, row-major, actions 4..15
state, events = apply_action(state, 4)
for ev in events.events:
    print("public event:", ev)

# hand the rest of the round to two scripted players
bots = [make_bot("greedy-value"), make_bot("risk-aware")]
rng = CounterRng(7)
while not state.game_over and state.round_index == 0:
    state, events = apply_action(state, bot_act(bots[state.current_player], state, rng))
    if events.round_result is not None:
        rr = events.round_result
        print(
            f"round over: scores {rr.scores}, trigger was player "
            f"{rr.trigger_player}, doubled={rr.doubled}"
        )

print("cumulative after round 0:", state.cumulative_scores)
