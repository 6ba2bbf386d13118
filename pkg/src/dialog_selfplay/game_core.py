"""Two-player extensive-form games with chance moves and information sets.

Everything here is exact: probabilities and payoffs are ``Fraction`` values.
Trees are built from a :class:`GameSpec` (the in-memory form of a game
file) and validated once; afterwards they are treated as immutable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType
from typing import Mapping, Optional, Union

from .errors import (
    DanglingReference,
    EmptySupportAtInfoSet,
    InfoSetMismatch,
    MissingInfoSetDistribution,
    NotATree,
    ProbabilitySumViolation,
    ValidationError,
)

CHANCE = "CHANCE"
USER = "USER"
AGENT = "AGENT"

CHANCE_KIND = "chance"
DECISION_KIND = "decision"
TERMINAL_KIND = "terminal"


# --------------------------------------------------------------------------
# Spec (unvalidated input form)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BranchSpec:
    label: str
    child: str
    probability: Optional[Fraction] = None


@dataclass(frozen=True)
class NodeSpec:
    id: str
    kind: str
    player: Optional[str] = None
    info_set: Optional[str] = None
    branches: tuple[BranchSpec, ...] = ()
    payoffs: Optional[Mapping[str, Fraction]] = None


@dataclass(frozen=True)
class GameSpec:
    """Unvalidated description of a game, as read from a game file.

    ``reduction`` optionally maps each player to ``{info_set: action label}``
    naming the "faithful" action used by the two-parameter surface.
    """

    players: tuple[str, ...]
    nodes: tuple[NodeSpec, ...]
    root: Optional[str] = None
    reduction: Optional[Mapping[str, Mapping[str, str]]] = None
    format_version: int = 1


# --------------------------------------------------------------------------
# Validated tree
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Outcome:
    label: str
    probability: Fraction
    child: str


@dataclass(frozen=True)
class Action:
    label: str
    child: str


@dataclass(frozen=True)
class ChanceNode:
    id: str
    outcomes: tuple[Outcome, ...]


@dataclass(frozen=True)
class DecisionNode:
    id: str
    player: str
    info_set: str
    actions: tuple[Action, ...]

    @property
    def action_labels(self) -> tuple[str, ...]:
        return tuple(a.label for a in self.actions)


@dataclass(frozen=True)
class TerminalNode:
    id: str
    payoffs: tuple[Fraction, ...]  # aligned with GameTree.players


Node = Union[ChanceNode, DecisionNode, TerminalNode]


@dataclass(frozen=True)
class InformationSet:
    id: str
    player: str
    actions: tuple[str, ...]
    members: tuple[str, ...]


@dataclass(frozen=True, eq=True)
class GameTree:
    players: tuple[str, str]
    root: str
    nodes: Mapping[str, Node]
    info_sets: tuple[InformationSet, ...]
    reduction: Optional[Mapping[str, Mapping[str, str]]] = None

    def __eq__(self, other):
        if not isinstance(other, GameTree):
            return NotImplemented
        return (
            self.players == other.players
            and self.root == other.root
            and list(self.nodes.items()) == list(other.nodes.items())
            and self.info_sets == other.info_sets
            and _plain(self.reduction) == _plain(other.reduction)
        )

    __hash__ = None

    def node(self, node_id: str) -> Node:
        return self.nodes[node_id]

    def player_index(self, player: str) -> int:
        return self.players.index(player)

    def info_set(self, info_set_id: str) -> InformationSet:
        for s in self.info_sets:
            if s.id == info_set_id:
                return s
        raise KeyError(info_set_id)

    def info_sets_of(self, player: str) -> tuple[InformationSet, ...]:
        return tuple(s for s in self.info_sets if s.player == player)

    def children(self, node_id: str) -> tuple[str, ...]:
        node = self.nodes[node_id]
        if isinstance(node, ChanceNode):
            return tuple(o.child for o in node.outcomes)
        if isinstance(node, DecisionNode):
            return tuple(a.child for a in node.actions)
        return ()

    def count(self, kind: type) -> int:
        return sum(isinstance(n, kind) for n in self.nodes.values())


def _plain(reduction):
    if reduction is None:
        return None
    return {p: dict(m) for p, m in reduction.items()}


# --------------------------------------------------------------------------
# Strategies
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BehaviorStrategy:
    """Per-information-set action distributions for one player.

    ``unreached`` lists information sets whose distribution was filled in
    uniformly because no supported pure strategy reaches them.
    """

    player: str
    probs: Mapping[str, tuple[Fraction, ...]]
    unreached: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        fixed = {}
        for key, dist in self.probs.items():
            dist = tuple(Fraction(p) for p in dist)
            if any(p < 0 or p > 1 for p in dist):
                raise ValueError(f"probability outside [0, 1] at {key!r}: {dist}")
            if sum(dist) != 1:
                raise ValueError(f"distribution at {key!r} sums to {sum(dist)}")
            fixed[key] = dist
        object.__setattr__(self, "probs", MappingProxyType(fixed))
        object.__setattr__(self, "unreached", frozenset(self.unreached))

    def __eq__(self, other):
        if not isinstance(other, BehaviorStrategy):
            return NotImplemented
        return self.player == other.player and dict(self.probs) == dict(other.probs)

    def __hash__(self):
        return hash((self.player, tuple(sorted(self.probs.items()))))

    def key(self) -> tuple:
        return tuple(self.probs.items())


@dataclass(frozen=True)
class BehaviorProfile:
    user: BehaviorStrategy
    agent: BehaviorStrategy

    def strategies(self) -> tuple[BehaviorStrategy, BehaviorStrategy]:
        return (self.user, self.agent)

    def for_player(self, player: str) -> BehaviorStrategy:
        for s in self.strategies():
            if s.player == player:
                return s
        raise MissingInfoSetDistribution(f"profile has no strategy for {player!r}")

    def key(self) -> tuple:
        return (self.user.key(), self.agent.key())


@dataclass(frozen=True)
class ReducedProfile:
    """User faithfulness ``x`` and agent obedience ``y``, both in [0, 1]."""

    x: Fraction
    y: Fraction

    def __post_init__(self):
        for name in ("x", "y"):
            v = Fraction(getattr(self, name))
            if not 0 <= v <= 1:
                raise ValueError(f"{name}={v} outside [0, 1]")
            object.__setattr__(self, name, v)


# --------------------------------------------------------------------------
# Construction and validation
# --------------------------------------------------------------------------


def build_game(spec: GameSpec) -> GameTree:
    """Validate ``spec`` and return the corresponding :class:`GameTree`."""
    players = tuple(spec.players)
    if len(players) != 2 or len(set(players)) != 2 or CHANCE in players:
        raise ValidationError(f"expected exactly two distinct personal players, got {players}")
    if not spec.nodes:
        raise ValidationError("game has no nodes")

    ids = [n.id for n in spec.nodes]
    seen = set()
    for nid in ids:
        if nid in seen:
            raise ValidationError(f"duplicate node id {nid!r}")
        seen.add(nid)
    root = spec.root if spec.root is not None else ids[0]
    if root not in seen:
        raise DanglingReference(f"root {root!r} is not a node")

    nodes: dict[str, Node] = {}
    for ns in spec.nodes:
        nodes[ns.id] = _build_node(ns, players, seen)

    _check_tree(root, nodes)
    info_sets = _collect_info_sets(root, nodes, players)
    reduction = _check_reduction(spec.reduction, info_sets)
    return GameTree(
        players=players,
        root=root,
        nodes=MappingProxyType(nodes),
        info_sets=info_sets,
        reduction=reduction,
    )


def _build_node(ns: NodeSpec, players, known_ids) -> Node:
    if ns.kind == TERMINAL_KIND:
        if ns.branches:
            raise ValidationError(f"terminal node {ns.id!r} has children")
        payoffs = dict(ns.payoffs or {})
        missing = [p for p in players if p not in payoffs]
        extra = [p for p in payoffs if p not in players]
        if missing or extra:
            raise ValidationError(
                f"terminal {ns.id!r} payoffs must name exactly {players}; "
                f"missing {missing}, unknown {extra}"
            )
        return TerminalNode(ns.id, tuple(Fraction(payoffs[p]) for p in players))

    if ns.kind not in (CHANCE_KIND, DECISION_KIND):
        raise ValidationError(f"node {ns.id!r} has unknown kind {ns.kind!r}")
    if not ns.branches:
        raise ValidationError(f"node {ns.id!r} has no outgoing branches")
    labels = [b.label for b in ns.branches]
    if len(set(labels)) != len(labels):
        raise ValidationError(f"node {ns.id!r} repeats a branch label: {labels}")
    for b in ns.branches:
        if b.child not in known_ids:
            raise DanglingReference(f"node {ns.id!r} references unknown child {b.child!r}")

    if ns.kind == CHANCE_KIND:
        outcomes = []
        for b in ns.branches:
            if b.probability is None:
                raise ProbabilitySumViolation(f"chance node {ns.id!r} outcome {b.label!r} has no probability")
            p = Fraction(b.probability)
            if not 0 <= p <= 1:
                raise ProbabilitySumViolation(f"chance node {ns.id!r}: probability {p} outside [0, 1]")
            outcomes.append(Outcome(b.label, p, b.child))
        total = sum(o.probability for o in outcomes)
        if total != 1:
            raise ProbabilitySumViolation(f"chance node {ns.id!r}: probabilities sum to {total}, not 1")
        return ChanceNode(ns.id, tuple(outcomes))

    if ns.player not in players:
        raise ValidationError(f"decision node {ns.id!r} has unknown player {ns.player!r}")
    if not ns.info_set:
        raise InfoSetMismatch(f"decision node {ns.id!r} has no information set")
    return DecisionNode(ns.id, ns.player, ns.info_set, tuple(Action(b.label, b.child) for b in ns.branches))


def _check_tree(root: str, nodes: Mapping[str, Node]) -> None:
    parents: dict[str, str] = {}
    for nid, node in nodes.items():
        for child in _node_children(node):
            if child == root:
                raise NotATree(f"node {nid!r} points back to the root")
            if child in parents:
                raise NotATree(f"node {child!r} has two parents ({parents[child]!r}, {nid!r})")
            parents[child] = nid
    reached = set()
    stack = [root]
    while stack:
        nid = stack.pop()
        reached.add(nid)
        stack.extend(_node_children(nodes[nid]))
    unreached = [nid for nid in nodes if nid not in reached]
    if unreached:
        raise NotATree(f"nodes not reachable from the root (cycle or forest): {unreached}")


def _node_children(node: Node) -> tuple[str, ...]:
    if isinstance(node, ChanceNode):
        return tuple(o.child for o in node.outcomes)
    if isinstance(node, DecisionNode):
        return tuple(a.child for a in node.actions)
    return ()


def _collect_info_sets(root, nodes, players) -> tuple[InformationSet, ...]:
    order: list[str] = []
    owner: dict[str, str] = {}
    labels: dict[str, tuple[str, ...]] = {}
    members: dict[str, list[str]] = {}
    for nid, node in nodes.items():
        if not isinstance(node, DecisionNode):
            continue
        s = node.info_set
        if s not in owner:
            order.append(s)
            owner[s] = node.player
            labels[s] = node.action_labels
            members[s] = []
        elif owner[s] != node.player:
            raise InfoSetMismatch(
                f"information set {s!r} mixes players {owner[s]!r} and {node.player!r}"
            )
        elif labels[s] != node.action_labels:
            raise InfoSetMismatch(
                f"information set {s!r} has differing action lists {labels[s]} and {node.action_labels}"
            )
        members[s].append(nid)

    histories = _own_histories(root, nodes, players)
    for s in order:
        first = histories[members[s][0]]
        for nid in members[s][1:]:
            if histories[nid] != first:
                raise InfoSetMismatch(
                    f"information set {s!r} violates perfect recall "
                    f"(node {nid!r} has a different own-move history)"
                )
    return tuple(InformationSet(s, owner[s], labels[s], tuple(members[s])) for s in order)


def _own_histories(root, nodes, players) -> dict[str, tuple]:
    """For each decision node: the owner's own (info set, action) sequence above it."""
    out: dict[str, tuple] = {}

    def walk(nid, hist):
        node = nodes[nid]
        if isinstance(node, DecisionNode):
            own = hist[node.player]
            out[nid] = own
            for idx, a in enumerate(node.actions):
                walk(a.child, {**hist, node.player: own + ((node.info_set, idx),)})
        elif isinstance(node, ChanceNode):
            for o in node.outcomes:
                walk(o.child, hist)

    walk(root, {p: () for p in players})
    return out


def _check_reduction(reduction, info_sets):
    if reduction is None:
        return None
    by_id = {s.id: s for s in info_sets}
    fixed = {}
    for player, mapping in reduction.items():
        entry = {}
        for set_id, label in mapping.items():
            s = by_id.get(set_id)
            if s is None:
                raise DanglingReference(f"reduction names unknown information set {set_id!r}")
            if s.player != player:
                raise InfoSetMismatch(f"reduction lists {set_id!r} under {player!r} but it belongs to {s.player!r}")
            if label not in s.actions:
                raise DanglingReference(f"reduction action {label!r} not available at {set_id!r}")
            entry[set_id] = label
        fixed[player] = MappingProxyType(entry)
    return MappingProxyType(fixed)


def serialize(tree: GameTree) -> GameSpec:
    """Inverse of :func:`build_game`."""
    specs = []
    for node in tree.nodes.values():
        if isinstance(node, ChanceNode):
            specs.append(NodeSpec(node.id, CHANCE_KIND, branches=tuple(
                BranchSpec(o.label, o.child, o.probability) for o in node.outcomes)))
        elif isinstance(node, DecisionNode):
            specs.append(NodeSpec(node.id, DECISION_KIND, player=node.player, info_set=node.info_set,
                                  branches=tuple(BranchSpec(a.label, a.child) for a in node.actions)))
        else:
            specs.append(NodeSpec(node.id, TERMINAL_KIND, payoffs=dict(zip(tree.players, node.payoffs))))
    return GameSpec(
        players=tree.players,
        nodes=tuple(specs),
        root=tree.root,
        reduction=_plain(tree.reduction),
    )


# --------------------------------------------------------------------------
# The trip-booking game
# --------------------------------------------------------------------------

DESTINATIONS = ("Starbucks", "Peet's")


def trip_booking_spec(chance_probabilities=(Fraction(1, 2), Fraction(1, 2))) -> GameSpec:
    """Spec of the simplified trip-booking game.

    Chance picks a destination, the user says one, the agent drives to one
    without seeing the destination. Both players receive the same payoff:
    -1 for the wrong destination, 11/10 for the right one after a truthful
    message, 1 for the right one after an untruthful message.
    """
    short = {"Starbucks": "S", "Peet's": "P"}
    nodes = [NodeSpec("root", CHANCE_KIND, branches=tuple(
        BranchSpec(d, f"u{i + 1}", Fraction(p)) for i, (d, p) in enumerate(zip(DESTINATIONS, chance_probabilities))))]
    agent_nodes, terminals = [], []
    for i, dest in enumerate(DESTINATIONS):
        branches = []
        for said in DESTINATIONS:
            aid = f"a_{short[dest]}{short[said]}"
            branches.append(BranchSpec(f"Say-{said}", aid))
            drive_branches = []
            for drive in DESTINATIONS:
                tid = f"t_{short[dest]}{short[said]}{short[drive]}"
                drive_branches.append(BranchSpec(f"Drive-{drive}", tid))
                if drive != dest:
                    r = Fraction(-1)
                elif said == dest:
                    r = Fraction(11, 10)
                else:
                    r = Fraction(1)
                terminals.append(NodeSpec(tid, TERMINAL_KIND, payoffs={USER: r, AGENT: r}))
            info_set = "IS1" if said == "Starbucks" else "IS2"
            agent_nodes.append(NodeSpec(aid, DECISION_KIND, player=AGENT, info_set=info_set,
                                        branches=tuple(drive_branches)))
        nodes.append(NodeSpec(f"u{i + 1}", DECISION_KIND, player=USER, info_set=f"Node {i + 1}",
                              branches=tuple(branches)))
    nodes.extend(agent_nodes)
    nodes.extend(terminals)
    reduction = {
        USER: {"Node 1": "Say-Starbucks", "Node 2": "Say-Peet's"},
        AGENT: {"IS1": "Drive-Starbucks", "IS2": "Drive-Peet's"},
    }
    return GameSpec(players=(USER, AGENT), nodes=tuple(nodes), root="root", reduction=reduction)


def trip_booking_game() -> GameTree:
    return build_game(trip_booking_spec())


paper_game = trip_booking_game


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------


def expected_reward(tree: GameTree, profile: BehaviorProfile) -> tuple[Fraction, Fraction]:
    """Exact expected payoff of each player (in ``tree.players`` order)."""
    strategies = {p: profile.for_player(p) for p in tree.players}
    for s in tree.info_sets:
        if s.id not in strategies[s.player].probs:
            raise MissingInfoSetDistribution(f"no distribution for information set {s.id!r} ({s.player})")

    def value(nid):
        node = tree.nodes[nid]
        if isinstance(node, TerminalNode):
            return node.payoffs
        if isinstance(node, ChanceNode):
            branches = [(o.probability, o.child) for o in node.outcomes]
        else:
            dist = strategies[node.player].probs[node.info_set]
            branches = [(p, a.child) for p, a in zip(dist, node.actions)]
        total = [Fraction(0), Fraction(0)]
        for p, child in branches:
            if p:
                v = value(child)
                total[0] += p * v[0]
                total[1] += p * v[1]
        return tuple(total)

    return tuple(value(tree.root))


def behavior_from_mixed(tree: GameTree, player: str, mixed) -> BehaviorStrategy:
    """Realization-equivalent behavior strategy for a mixed strategy.

    Each information set's action probabilities are the mixed weights of
    the pure strategies that reach it (through the player's own earlier
    moves) and pick that action, normalized. Sets no supported pure
    strategy reaches get a uniform distribution and are listed in
    ``unreached``; an :class:`EmptySupportAtInfoSet` warning is issued.
    """
    from .normal_form import enumerate_pure_strategies

    pures = enumerate_pure_strategies(tree, player)
    weights = [Fraction(w) for w in mixed.probs]
    if len(weights) != len(pures):
        raise ValueError(f"mixed strategy has {len(weights)} entries, {player} has {len(pures)} pure strategies")
    sets = tree.info_sets_of(player)
    position = {s.id: i for i, s in enumerate(sets)}
    histories = _own_histories(tree.root, tree.nodes, tree.players)

    probs, unreached = {}, set()
    for s in sets:
        required = histories[s.members[0]]
        col = position[s.id]
        reach = [Fraction(0)] * len(s.actions)
        for pure, w in zip(pures, weights):
            if w and all(pure.choices[position[iset]] == a for iset, a in required):
                reach[pure.choices[col]] += w
        total = sum(reach)
        if total == 0:
            unreached.add(s.id)
            probs[s.id] = tuple(Fraction(1, len(s.actions)) for _ in s.actions)
            warnings.warn(f"information set {s.id!r} unreachable under the mixed strategy; using uniform",
                          EmptySupportAtInfoSet, stacklevel=2)
        else:
            probs[s.id] = tuple(r / total for r in reach)
    return BehaviorStrategy(player, probs, frozenset(unreached))


def behavior_strategy(tree: GameTree, player: str, probs: Mapping[str, Mapping[str, Fraction]]) -> BehaviorStrategy:
    """Build a behavior strategy from ``{info_set: {action label: prob}}``.

    Missing actions get probability zero.
    """
    out = {}
    for s in tree.info_sets_of(player):
        if s.id not in probs:
            raise MissingInfoSetDistribution(f"no distribution for information set {s.id!r} ({player})")
        given = probs[s.id]
        unknown = set(given) - set(s.actions)
        if unknown:
            raise ValidationError(f"unknown actions at {s.id!r}: {sorted(unknown)}")
        out[s.id] = tuple(Fraction(given.get(a, 0)) for a in s.actions)
    extra = set(probs) - {s.id for s in tree.info_sets_of(player)}
    if extra:
        raise ValidationError(f"{player} owns no information sets named {sorted(extra)}")
    return BehaviorStrategy(player, out)


def uniform_profile(tree: GameTree) -> BehaviorProfile:
    strategies = [
        BehaviorStrategy(p, {s.id: tuple(Fraction(1, len(s.actions)) for _ in s.actions) for s in tree.info_sets_of(p)})
        for p in tree.players
    ]
    return BehaviorProfile(*strategies)
