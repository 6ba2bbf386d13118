"""All extreme Nash equilibria of a bimatrix game, plus certificates and playback.

Enumeration follows the classic best-response-polytope construction:

* shift both payoff matrices so every entry is positive,
* enumerate the vertices of ``P = {x >= 0 : B^T x <= 1}`` and
  ``Q = {y >= 0 : A y <= 1}`` by trying every basis of tight constraints,
* keep the vertex pairs whose tight-constraint labels cover every pure
  strategy of both players, and rescale them to probability vectors.

Everything is exact, so degenerate games (like the common-payoff trip
booking game) are handled without tolerances.
"""

from __future__ import annotations

import itertools
import logging
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .errors import (
    DegenerateBasis,
    DimensionMismatch,
    EmptyList,
    InternalVerificationFailure,
    MissingInfoSetDistribution,
)
from .game_core import BehaviorProfile, ChanceNode, DecisionNode, GameTree, TerminalNode
from .normal_form import BimatrixGame, MixedStrategy, behavior_profile_from_mixed, mixed_expected_payoff
from .rational import solve

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlayerDeviation:
    best: Fraction
    current: Fraction
    best_responses: tuple[int, ...]

    @property
    def gain(self) -> Fraction:
        return self.best - self.current


@dataclass(frozen=True)
class DeviationCertificate:
    user: PlayerDeviation
    agent: PlayerDeviation

    @property
    def gains(self) -> tuple[Fraction, Fraction]:
        return self.user.gain, self.agent.gain

    @property
    def is_equilibrium(self) -> bool:
        return self.user.gain == 0 and self.agent.gain == 0

    def __bool__(self):
        return self.is_equilibrium


@dataclass(frozen=True)
class EquilibriumRecord:
    user: MixedStrategy
    agent: MixedStrategy
    behavior: Optional[BehaviorProfile]
    supports: tuple[tuple[int, ...], tuple[int, ...]]
    payoffs: tuple[Fraction, Fraction]
    # indices of the tight constraints whose basis produced each vertex
    basis: tuple[tuple[int, ...], tuple[int, ...]] = field(default=((), ()))

    @property
    def reward(self) -> Fraction:
        """Reported expected reward: the row (user) player's value."""
        return self.payoffs[0]

    def key(self) -> tuple:
        if self.behavior is not None:
            return self.behavior.key()
        return (self.user.probs, self.agent.probs)


def _player_index(game: BimatrixGame, player) -> int:
    if player in (0, 1):
        return int(player)
    return game.players.index(player)


def best_response_values(game: BimatrixGame, player, opponent_mix: MixedStrategy) -> list[Fraction]:
    """Payoff of each of ``player``'s pure strategies against ``opponent_mix``."""
    idx = _player_index(game, player)
    m, n = game.shape
    y = opponent_mix.probs
    if idx == 0:
        if len(y) != n:
            raise DimensionMismatch(f"column mix has {len(y)} entries, game has {n} columns")
        return [sum((game.A[i][j] * y[j] for j in range(n) if y[j]), Fraction(0)) for i in range(m)]
    if len(y) != m:
        raise DimensionMismatch(f"row mix has {len(y)} entries, game has {m} rows")
    return [sum((y[i] * game.B[i][j] for i in range(m) if y[i]), Fraction(0)) for j in range(n)]


def is_equilibrium(game: BimatrixGame, mix_u: MixedStrategy, mix_a: MixedStrategy) -> DeviationCertificate:
    current = mixed_expected_payoff(game, mix_u, mix_a)
    parts = []
    for idx, opp in ((0, mix_a), (1, mix_u)):
        values = best_response_values(game, idx, opp)
        best = max(values)
        parts.append(PlayerDeviation(best, current[idx], tuple(i for i, v in enumerate(values) if v == best)))
    return DeviationCertificate(*parts)


# --------------------------------------------------------------------------
# Vertex enumeration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _Vertex:
    point: tuple[Fraction, ...]
    labels: frozenset
    basis: tuple[int, ...]


def _shifted(M) -> list[list[Fraction]]:
    low = min(v for row in M for v in row)
    shift = 1 - low
    return [[v + shift for v in row] for row in M]


def _polytope_vertices(rows: list[list[Fraction]], dim: int, nonneg_labels, row_labels) -> list[_Vertex]:
    """Vertices of ``{z in R^dim : z >= 0, rows . z <= 1}``.

    Constraint ``k < dim`` is ``z_k >= 0``; constraint ``dim + r`` is row ``r``.
    """
    constraints = [([Fraction(int(i == k)) for i in range(dim)], Fraction(0)) for k in range(dim)]
    constraints += [(row, Fraction(1)) for row in rows]
    labels = list(nonneg_labels) + list(row_labels)
    found: dict[tuple, _Vertex] = {}
    singular = 0
    for basis in itertools.combinations(range(len(constraints)), dim):
        try:
            z = solve([constraints[k][0] for k in basis], [constraints[k][1] for k in basis])
        except DegenerateBasis:
            singular += 1
            continue
        if any(v < 0 for v in z):
            continue
        slack = [1 - sum(a * b for a, b in zip(row, z)) for row in rows]
        if any(s < 0 for s in slack):
            continue
        point = tuple(z)
        if point in found:
            continue
        tight = {labels[k] for k in range(dim) if z[k] == 0}
        tight |= {labels[dim + r] for r, s in enumerate(slack) if s == 0}
        found[point] = _Vertex(point, frozenset(tight), basis)
    log.debug("polytope dim=%d: %d vertices, %d singular bases skipped", dim, len(found), singular)
    return list(found.values())


def _normalize(point) -> tuple[Fraction, ...]:
    total = sum(point)
    return tuple(v / total for v in point)


def enumerate_equilibria(game: BimatrixGame) -> list[EquilibriumRecord]:
    """Every extreme equilibrium of ``game``, deduplicated and canonically sorted.

    For games reduced from a tree, duplicates are removed at the behavior
    level. Records are sorted by decreasing total payoff, then by
    decreasing probabilities in information-set order, which makes the
    output deterministic.
    """
    m, n = game.shape
    A = _shifted(game.A)
    B = _shifted(game.B)
    everything = frozenset(range(m + n))

    # P: x in R^m, labels i for x_i = 0 and m + j for (B^T x)_j = 1
    p_rows = [[B[i][j] for i in range(m)] for j in range(n)]
    p_vertices = _polytope_vertices(p_rows, m, range(m), [m + j for j in range(n)])
    # Q: y in R^n, labels i for (A y)_i = 1 and m + j for y_j = 0
    q_vertices = _polytope_vertices([list(row) for row in A], n, [m + j for j in range(n)], range(m))

    user, agent = game.players
    records: list[EquilibriumRecord] = []
    seen = set()
    for xv in p_vertices:
        if not any(xv.point):
            continue
        for yv in q_vertices:
            if not any(yv.point) or (xv.labels | yv.labels) != everything:
                continue
            mix_u = MixedStrategy(user, _normalize(xv.point))
            mix_a = MixedStrategy(agent, _normalize(yv.point))
            cert = is_equilibrium(game, mix_u, mix_a)
            if not cert.is_equilibrium:
                raise InternalVerificationFailure(
                    f"completely labeled pair {mix_u.probs} / {mix_a.probs} has gains {cert.gains}")
            behavior = None
            if game.tree is not None:
                behavior = behavior_profile_from_mixed(game.tree, mix_u, mix_a)
            record = EquilibriumRecord(
                user=mix_u,
                agent=mix_a,
                behavior=behavior,
                supports=(mix_u.support, mix_a.support),
                payoffs=mixed_expected_payoff(game, mix_u, mix_a),
                basis=(xv.basis, yv.basis),
            )
            if record.key() in seen:
                continue
            seen.add(record.key())
            records.append(record)
    records.sort(key=_canonical_key)
    return records


def _canonical_key(record: EquilibriumRecord):
    if record.behavior is not None:
        flat = [p for strat in record.behavior.strategies() for dist in strat.probs.values() for p in dist]
    else:
        flat = list(record.user.probs) + list(record.agent.probs)
    return (-(record.payoffs[0] + record.payoffs[1]), tuple(-p for p in flat))


def select_best_equilibrium(records: Sequence[EquilibriumRecord]) -> EquilibriumRecord:
    """Highest total payoff; ties go to the earliest record."""
    if not records:
        raise EmptyList("no equilibria to choose from")
    best = records[0]
    for r in records[1:]:
        if sum(r.payoffs) > sum(best.payoffs):
            best = r
    return best


# --------------------------------------------------------------------------
# Playback
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EpisodeLog:
    path: tuple[str, ...]
    payoffs: tuple[Fraction, Fraction]


@dataclass(frozen=True)
class PlaybackStats:
    episodes: int
    mean: Fraction  # user's mean reward
    mean_per_player: tuple[Fraction, Fraction]
    histogram: dict  # user reward -> count
    log: tuple[EpisodeLog, ...]


def _sample(rng: random.Random, dist: Sequence[Fraction]) -> int:
    denom = math.lcm(*(p.denominator for p in dist))
    draw = rng.randrange(denom)
    acc = 0
    for i, p in enumerate(dist):
        acc += p.numerator * (denom // p.denominator)
        if draw < acc:
            return i
    raise AssertionError("distribution does not sum to 1")


def play_strategy(tree: GameTree, profile: BehaviorProfile, episodes: int, seed: int = 0) -> PlaybackStats:
    """Sample ``episodes`` plays of ``profile``.

    Draws are exact: each distribution is sampled by a uniform integer over
    its common denominator, from a ``random.Random(seed)`` stream.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    strategies = {p: profile.for_player(p) for p in tree.players}
    for s in tree.info_sets:
        if s.id not in strategies[s.player].probs:
            raise MissingInfoSetDistribution(f"no distribution for information set {s.id!r} ({s.player})")

    rng = random.Random(seed)
    logs = []
    totals = [Fraction(0), Fraction(0)]
    hist: Counter = Counter()
    for _ in range(episodes):
        nid, path = tree.root, []
        while True:
            node = tree.nodes[nid]
            if isinstance(node, TerminalNode):
                break
            if isinstance(node, ChanceNode):
                k = _sample(rng, [o.probability for o in node.outcomes])
                path.append(node.outcomes[k].label)
                nid = node.outcomes[k].child
            else:
                assert isinstance(node, DecisionNode)
                k = _sample(rng, strategies[node.player].probs[node.info_set])
                path.append(node.actions[k].label)
                nid = node.actions[k].child
        logs.append(EpisodeLog(tuple(path), node.payoffs))
        totals[0] += node.payoffs[0]
        totals[1] += node.payoffs[1]
        hist[node.payoffs[0]] += 1
    means = (totals[0] / episodes, totals[1] / episodes)
    return PlaybackStats(episodes, means[0], means, dict(sorted(hist.items())), tuple(logs))
