import dataclasses
import random
from fractions import Fraction

import pytest

from dialog_selfplay import equilibrium
from dialog_selfplay.equilibrium import (
    DeviationCertificate,
    PlayerDeviation,
    best_response_values,
    enumerate_equilibria,
    is_equilibrium,
    play_strategy,
    select_best_equilibrium,
)
from dialog_selfplay.errors import DegenerateBasis, DimensionMismatch, EmptyList, InternalVerificationFailure
from dialog_selfplay.game_core import expected_reward, uniform_profile
from dialog_selfplay.normal_form import BimatrixGame, MixedStrategy
from dialog_selfplay.rational import solve
from oracles import P, KNOWN_EQUILIBRIA, S, random_matrix, support_enumeration, trip_profile, trip_pure

ORDER = [(S, S), (S, P), (P, S), (P, P)]
TRUTH, OBEY, DISOBEY = 1, 1, 2


def pure(player, i, n=4):
    return MixedStrategy.pure(player, n, i)


class TestBestResponse:
    def test_user_against_obey(self, game):
        values = best_response_values(game, "USER", pure("AGENT", OBEY))
        oracle = [trip_pure(u, (S, P)) for u in ORDER]
        assert oracle == [Fraction(1, 20), Fraction(11, 10), Fraction(-1), Fraction(1, 20)]
        assert values == oracle

    def test_agent_against_truth(self, game):
        values = best_response_values(game, "AGENT", pure("USER", TRUTH))
        assert max(values) == Fraction(11, 10)
        assert values.index(max(values)) == OBEY

    def test_constant_game(self):
        g = BimatrixGame.from_matrices([[3] * 3] * 2, [[3] * 3] * 2)
        assert len(set(best_response_values(g, 0, MixedStrategy.uniform("AGENT", 3)))) == 1
        assert len(set(best_response_values(g, 1, MixedStrategy.uniform("USER", 2)))) == 1

    def test_dimension_mismatch(self, game):
        with pytest.raises(DimensionMismatch):
            best_response_values(game, "USER", MixedStrategy.uniform("AGENT", 3))


class TestCertificate:
    def test_truth_obey(self, game):
        assert is_equilibrium(game, pure("USER", TRUTH), pure("AGENT", OBEY)).gains == (0, 0)

    def test_truth_disobey(self, game):
        cert = is_equilibrium(game, pure("USER", TRUTH), pure("AGENT", DISOBEY))
        assert cert.agent.gain == Fraction(21, 10)
        assert not cert.is_equilibrium

    def test_row_seven(self, game):
        x = MixedStrategy("USER", (0, Fraction(20, 41), Fraction(21, 41), 0))
        y = MixedStrategy("AGENT", (0, Fraction(20, 41), Fraction(21, 41), 0))
        cert = is_equilibrium(game, x, y)
        assert cert.gains == (0, 0)
        assert cert.user.current == Fraction(1, 41)


class TestEnumeration:
    def test_trip_booking_rows(self, tree, records):
        assert len(records) == 7
        for record, (row, reward) in zip(records, KNOWN_EQUILIBRIA):
            assert record.behavior == trip_profile(*row)
            assert record.reward == reward
            assert expected_reward(tree, record.behavior) == (reward, reward)

    def test_every_record_certified(self, game, records):
        for r in records:
            assert is_equilibrium(game, r.user, r.agent).gains == (0, 0)

    def test_coordination_game(self):
        g = BimatrixGame.from_matrices([[1, 0], [0, 1]], [[1, 0], [0, 1]])
        recs = enumerate_equilibria(g)
        pairs = {(r.user.probs, r.agent.probs) for r in recs}
        half = (Fraction(1, 2), Fraction(1, 2))
        assert pairs == {((1, 0), (1, 0)), ((0, 1), (0, 1)), (half, half)}
        assert [r for r in recs if r.user.probs == half][0].payoffs == (Fraction(1, 2),) * 2

    def test_one_by_one(self):
        recs = enumerate_equilibria(BimatrixGame.from_matrices([[5]], [[-2]]))
        assert len(recs) == 1
        assert recs[0].payoffs == (5, -2)

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_support_enumeration(self, seed):
        rng = random.Random(seed)
        m, n = rng.choice([(2, 2), (2, 3), (3, 3), (3, 2), (4, 3)])
        A, B = random_matrix(rng, m, n), random_matrix(rng, m, n)
        got = {(r.user.probs, r.agent.probs) for r in enumerate_equilibria(BimatrixGame.from_matrices(A, B))}
        assert got == support_enumeration(A, B)

    def test_deterministic(self, game, records):
        again = enumerate_equilibria(game)
        assert [r.key() for r in again] == [r.key() for r in records]
        assert [r.basis for r in again] == [r.basis for r in records]

    def test_dedup_idempotent(self, game, records):
        merged = {r.key(): r for r in records}
        for r in enumerate_equilibria(game):
            merged.setdefault(r.key(), r)
        assert len(merged) == len(records)

    def test_internal_failure_raises(self, game, monkeypatch):
        bad = PlayerDeviation(Fraction(1), Fraction(0), (0,))
        monkeypatch.setattr(equilibrium, "is_equilibrium", lambda *a: DeviationCertificate(bad, bad))
        with pytest.raises(InternalVerificationFailure):
            enumerate_equilibria(game)

    def test_singular_basis(self):
        with pytest.raises(DegenerateBasis):
            solve([[1, 2], [2, 4]], [1, 1])


def _transform(game, which, scale, shift):
    M = game.A if which == 0 else game.B
    M = tuple(tuple(v * scale + shift for v in row) for row in M)
    return dataclasses.replace(game, A=M) if which == 0 else dataclasses.replace(game, B=M)


@pytest.mark.parametrize("which,scale,shift", [
    (0, Fraction(1), Fraction(7)),
    (1, Fraction(3), Fraction(-5, 2)),
    (0, Fraction(1, 10), Fraction(0)),
    (1, Fraction(42), Fraction(100)),
])
def test_trip_booking_invariance(game, records, which, scale, shift):
    transformed = enumerate_equilibria(_transform(game, which, scale, shift))
    assert {r.key() for r in transformed} == {r.key() for r in records}


class TestSelection:
    def test_trip_booking_best(self, records):
        best = select_best_equilibrium(records)
        assert best.reward == Fraction(11, 10)
        assert best.behavior == trip_profile(1, 0, 1, 0)

    def test_singleton(self, records):
        assert select_best_equilibrium(records[3:4]) is records[3]

    def test_tie_goes_to_earlier(self, records):
        r3, r4 = records[2], records[3]
        assert r3.reward == r4.reward == Fraction(1, 20)
        assert select_best_equilibrium([r3, r4]) is r3
        assert select_best_equilibrium([r4, r3]) is r4

    def test_empty(self):
        with pytest.raises(EmptyList):
            select_best_equilibrium([])


class TestPlayback:
    def test_truth_obey(self, tree):
        stats = play_strategy(tree, trip_profile(1, 0, 1, 0), 1000, seed=3)
        assert stats.mean == Fraction(11, 10)
        assert stats.histogram == {Fraction(11, 10): 1000}

    def test_opposite_day(self, tree):
        stats = play_strategy(tree, trip_profile(0, 1, 0, 1), 1000, seed=3)
        assert stats.mean == 1

    def test_signalling_profiles_have_zero_variance(self, tree):
        for row, reward in KNOWN_EQUILIBRIA[:2]:
            stats = play_strategy(tree, trip_profile(*row), 500, seed=11)
            assert set(stats.histogram) == {reward}

    def test_pooling_profile_depends_on_chance(self, tree):
        # always Starbucks: right half the time, wrong otherwise
        stats = play_strategy(tree, trip_profile(1, 1, 1, 1), 500, seed=11)
        assert set(stats.histogram) == {Fraction(11, 10), Fraction(-1)}

    def test_uniform_converges(self, tree):
        n = 20_000
        stats = play_strategy(tree, uniform_profile(tree), n, seed=0)
        # exact leaf distribution under the uniform profile: each of 8 leaves has probability 1/8
        values = [Fraction(11, 10), Fraction(-1), Fraction(1), Fraction(-1)] * 2
        mu = sum(values) / 8
        var = sum((v - mu) ** 2 for v in values) / 8
        assert mu == Fraction(1, 40)
        assert abs(float(stats.mean - mu)) <= 3 * (float(var) / n) ** 0.5

    def test_seeded(self, tree):
        a = play_strategy(tree, uniform_profile(tree), 200, seed=5)
        b = play_strategy(tree, uniform_profile(tree), 200, seed=5)
        assert a.log == b.log
        assert a.log[0].path[0] in ("Starbucks", "Peet's")

    def test_rejects_zero_episodes(self, tree):
        with pytest.raises(ValueError):
            play_strategy(tree, uniform_profile(tree), 0)
