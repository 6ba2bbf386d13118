"""Self-play for a simplified task-oriented dialog game.

Two routes to strategies for a user-bot and an agent-bot:

* exact equilibrium enumeration on the game's normal form, with the best
  equilibrium played back on sampled destinations (``equilibrium``);
* tabular policy-gradient / PPO self-play with restart statistics
  (``selfplay_rl``).
"""

from .equilibrium import (
    enumerate_equilibria,
    is_equilibrium,
    play_strategy,
    select_best_equilibrium,
)
from .game_core import build_game, expected_reward, paper_game, trip_booking_game
from .normal_form import reduce_to_normal_form
from .selfplay_rl import TrainConfig, run_experiment, run_restart

__all__ = [
    "TrainConfig",
    "build_game",
    "enumerate_equilibria",
    "expected_reward",
    "is_equilibrium",
    "paper_game",
    "play_strategy",
    "reduce_to_normal_form",
    "run_experiment",
    "run_restart",
    "select_best_equilibrium",
    "trip_booking_game",
]
