"""Reduction of an extensive-form game to its (full) normal form."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .errors import DimensionMismatch
from .game_core import (
    BehaviorProfile,
    BehaviorStrategy,
    ChanceNode,
    DecisionNode,
    GameTree,
    TerminalNode,
    behavior_from_mixed,
)


@dataclass(frozen=True)
class PureStrategy:
    """One action index per information set of ``player``, in canonical order."""

    player: str
    info_sets: tuple[str, ...]
    choices: tuple[int, ...]

    def action(self, info_set: str) -> int:
        return self.choices[self.info_sets.index(info_set)]

    def label(self, tree: GameTree) -> str:
        acts = [tree.info_set(s).actions[c] for s, c in zip(self.info_sets, self.choices)]
        return "(" + ", ".join(acts) + ")"


@dataclass(frozen=True)
class MixedStrategy:
    player: str
    probs: tuple[Fraction, ...]

    def __post_init__(self):
        probs = tuple(Fraction(p) for p in self.probs)
        if any(p < 0 for p in probs):
            raise ValueError(f"negative probability in mixed strategy: {probs}")
        if sum(probs) != 1:
            raise ValueError(f"mixed strategy sums to {sum(probs)}, not 1")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def pure(cls, player: str, size: int, index: int) -> "MixedStrategy":
        return cls(player, tuple(Fraction(int(i == index)) for i in range(size)))

    @classmethod
    def uniform(cls, player: str, size: int) -> "MixedStrategy":
        return cls(player, (Fraction(1, size),) * size)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, p in enumerate(self.probs) if p)


@dataclass(frozen=True)
class BimatrixGame:
    """Payoff matrices ``A`` (row player) and ``B`` (column player).

    When produced by :func:`reduce_to_normal_form` the originating tree and
    pure-strategy lists are kept so equilibria can be mapped back to
    behavior strategies.
    """

    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    A: tuple[tuple[Fraction, ...], ...]
    B: tuple[tuple[Fraction, ...], ...]
    players: tuple[str, str] = ("USER", "AGENT")
    tree: Optional[GameTree] = None
    row_strategies: Optional[tuple[PureStrategy, ...]] = None
    col_strategies: Optional[tuple[PureStrategy, ...]] = None

    def __post_init__(self):
        A = tuple(tuple(Fraction(v) for v in row) for row in self.A)
        B = tuple(tuple(Fraction(v) for v in row) for row in self.B)
        m, n = len(self.row_labels), len(self.col_labels)
        for name, M in (("A", A), ("B", B)):
            if len(M) != m or any(len(row) != n for row in M):
                raise DimensionMismatch(f"payoff matrix {name} is not {m}x{n}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @classmethod
    def from_matrices(cls, A: Sequence[Sequence], B: Sequence[Sequence], players=("USER", "AGENT")):
        m, n = len(A), len(A[0]) if A else 0
        return cls(tuple(f"r{i}" for i in range(m)), tuple(f"c{j}" for j in range(n)), A, B, players)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.row_labels), len(self.col_labels)


def enumerate_pure_strategies(tree: GameTree, player: str) -> list[PureStrategy]:
    """Cartesian product over ``player``'s information sets.

    Ordered lexicographically: the first information set varies slowest.
    """
    sets = tree.info_sets_of(player)
    ids = tuple(s.id for s in sets)
    ranges = [range(len(s.actions)) for s in sets]
    return [PureStrategy(player, ids, combo) for combo in itertools.product(*ranges)]


def pure_payoff(tree: GameTree, row: PureStrategy, col: PureStrategy) -> tuple[Fraction, Fraction]:
    """Chance-averaged payoffs when both players commit to pure strategies."""
    chosen = {row.player: row, col.player: col}

    def value(nid):
        node = tree.nodes[nid]
        if isinstance(node, TerminalNode):
            return node.payoffs
        if isinstance(node, DecisionNode):
            return value(node.actions[chosen[node.player].action(node.info_set)].child)
        assert isinstance(node, ChanceNode)
        total = [Fraction(0), Fraction(0)]
        for o in node.outcomes:
            if o.probability:
                v = value(o.child)
                total[0] += o.probability * v[0]
                total[1] += o.probability * v[1]
        return tuple(total)

    return tuple(value(tree.root))


def reduce_to_normal_form(tree: GameTree) -> BimatrixGame:
    user, agent = tree.players
    rows = enumerate_pure_strategies(tree, user)
    cols = enumerate_pure_strategies(tree, agent)
    A, B = [], []
    for r in rows:
        arow, brow = [], []
        for c in cols:
            a, b = pure_payoff(tree, r, c)
            arow.append(a)
            brow.append(b)
        A.append(tuple(arow))
        B.append(tuple(brow))
    return BimatrixGame(
        row_labels=tuple(r.label(tree) for r in rows),
        col_labels=tuple(c.label(tree) for c in cols),
        A=tuple(A),
        B=tuple(B),
        players=tree.players,
        tree=tree,
        row_strategies=tuple(rows),
        col_strategies=tuple(cols),
    )


def mixed_expected_payoff(game: BimatrixGame, mix_u: MixedStrategy, mix_a: MixedStrategy) -> tuple[Fraction, Fraction]:
    """``(x^T A y, x^T B y)`` in exact arithmetic."""
    m, n = game.shape
    if len(mix_u.probs) != m or len(mix_a.probs) != n:
        raise DimensionMismatch(f"mixes of length {len(mix_u.probs)}x{len(mix_a.probs)} for a {m}x{n} game")
    x, y = mix_u.probs, mix_a.probs
    va = vb = Fraction(0)
    for i in range(m):
        if not x[i]:
            continue
        for j in range(n):
            if y[j]:
                w = x[i] * y[j]
                va += w * game.A[i][j]
                vb += w * game.B[i][j]
    return va, vb


def mixed_from_behavior(tree: GameTree, strategy: BehaviorStrategy) -> MixedStrategy:
    """Product mixed strategy: weight of a pure strategy is the product of its action probabilities."""
    pures = enumerate_pure_strategies(tree, strategy.player)
    weights = []
    for pure in pures:
        w = Fraction(1)
        for set_id, choice in zip(pure.info_sets, pure.choices):
            w *= strategy.probs[set_id][choice]
        weights.append(w)
    return MixedStrategy(strategy.player, tuple(weights))


def behavior_profile_from_mixed(tree: GameTree, mix_u: MixedStrategy, mix_a: MixedStrategy) -> BehaviorProfile:
    return BehaviorProfile(
        behavior_from_mixed(tree, tree.players[0], mix_u),
        behavior_from_mixed(tree, tree.players[1], mix_a),
    )
