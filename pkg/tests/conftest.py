import pytest

from dialog_selfplay.equilibrium import enumerate_equilibria
from dialog_selfplay.game_core import trip_booking_game
from dialog_selfplay.normal_form import reduce_to_normal_form


@pytest.fixture(scope="session")
def tree():
    return trip_booking_game()


@pytest.fixture(scope="session")
def game(tree):
    return reduce_to_normal_form(tree)


@pytest.fixture(scope="session")
def records(game):
    return enumerate_equilibria(game)
