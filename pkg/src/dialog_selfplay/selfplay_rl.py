"""Tabular policy-gradient self-play between a user-bot and an agent-bot.

The environment is any game of the form chance -> user decision -> agent
decision -> terminal with common payoffs (the trip-booking game is one).
The user observes its own information set (the destination) and the agent
observes its information set (the user's message). Each bot keeps a table
of logits and acts by softmax.

Randomness: every restart owns a ``numpy`` Philox generator seeded with
the restart seed. Each episode consumes exactly three consecutive
uniforms (chance, user, agent), so episode ``k`` of a restart always maps
to the same counter block regardless of batch size or scheduling.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .errors import EmptyBatch, ShapeMismatch
from .game_core import ChanceNode, DecisionNode, GameTree, TerminalNode

FULL = "FULL"
OPPOSITE = "OPPOSITE"
NONE = "NONE"
UNDEFINED = "UNDEFINED"
OUTCOMES = (FULL, OPPOSITE, NONE, UNDEFINED)

FULL_REWARD = Fraction(11, 10)
OPPOSITE_REWARD = Fraction(1)
CLASSIFY_WINDOW = 3000
CLASSIFY_HITS = 2700
CONVERGENCE_WINDOW = 300
CONVERGENCE_THRESHOLD = Fraction(1095, 1000)


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "pg"
    iterations: int = 90
    episodes_per_iteration: int = 300
    learning_rate: float = 0.005
    baseline: str = "batch-mean"
    ppo_clip: float = 0.2
    ppo_epochs: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ("pg", "ppo"):
            raise ValueError(f"algorithm must be 'pg' or 'ppo', got {self.algorithm!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.episodes_per_iteration < 1:
            raise ValueError("episodes_per_iteration must be >= 1")
        if self.baseline not in ("none", "batch-mean"):
            raise ValueError(f"baseline must be 'none' or 'batch-mean', got {self.baseline!r}")
        if not 0 < self.ppo_clip < 1:
            raise ValueError("ppo_clip must lie in (0, 1)")
        if self.ppo_epochs < 1:
            raise ValueError("ppo_epochs must be >= 1")


# --------------------------------------------------------------------------
# Environment
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Environment:
    """Array form of a two-step game, cheap to pickle and to sample from."""

    outcome_labels: tuple[str, ...]
    chance_cdf: np.ndarray
    user_sets: tuple[str, ...]
    user_actions: tuple[str, ...]
    agent_sets: tuple[str, ...]
    agent_actions: tuple[str, ...]
    user_obs: np.ndarray  # [outcome] -> user row
    agent_obs: np.ndarray  # [outcome, user action] -> agent row
    reward_code: np.ndarray  # [outcome, user action, agent action] -> index into reward_values
    reward_values: tuple[Fraction, ...]
    faithful_user: Optional[tuple[int, ...]] = None
    faithful_agent: Optional[tuple[int, ...]] = None

    @property
    def reward_floats(self) -> np.ndarray:
        return np.array([float(r) for r in self.reward_values])


def make_environment(tree: GameTree) -> Environment:
    """Compile ``tree`` for self-play; raises ShapeMismatch for other shapes."""
    user, agent = tree.players
    root = tree.nodes[tree.root]
    if not isinstance(root, ChanceNode):
        raise ShapeMismatch("root must be a chance node")
    user_sets = tree.info_sets_of(user)
    agent_sets = tree.info_sets_of(agent)
    if not user_sets or not agent_sets:
        raise ShapeMismatch("both players need at least one information set")
    user_actions = user_sets[0].actions
    agent_actions = agent_sets[0].actions
    if any(s.actions != user_actions for s in user_sets) or any(s.actions != agent_actions for s in agent_sets):
        raise ShapeMismatch("all information sets of a bot must share one action list")
    u_index = {s.id: i for i, s in enumerate(user_sets)}
    a_index = {s.id: i for i, s in enumerate(agent_sets)}

    n_out, n_u, n_a = len(root.outcomes), len(user_actions), len(agent_actions)
    user_obs = np.zeros(n_out, dtype=np.int64)
    agent_obs = np.zeros((n_out, n_u), dtype=np.int64)
    codes = np.zeros((n_out, n_u, n_a), dtype=np.int8)
    values: list[Fraction] = []
    for k, o in enumerate(root.outcomes):
        unode = tree.nodes[o.child]
        if not isinstance(unode, DecisionNode) or unode.player != user:
            raise ShapeMismatch(f"chance outcome {o.label!r} must lead to a {user} decision")
        user_obs[k] = u_index[unode.info_set]
        for i, ua in enumerate(unode.actions):
            anode = tree.nodes[ua.child]
            if not isinstance(anode, DecisionNode) or anode.player != agent:
                raise ShapeMismatch(f"user action {ua.label!r} must lead to an {agent} decision")
            agent_obs[k, i] = a_index[anode.info_set]
            for j, aa in enumerate(anode.actions):
                leaf = tree.nodes[aa.child]
                if not isinstance(leaf, TerminalNode):
                    raise ShapeMismatch(f"agent action {aa.label!r} must lead to a terminal")
                if leaf.payoffs[0] != leaf.payoffs[1]:
                    raise ShapeMismatch(f"terminal {leaf.id!r} is not common-payoff")
                if leaf.payoffs[0] not in values:
                    values.append(leaf.payoffs[0])
                codes[k, i, j] = values.index(leaf.payoffs[0])

    faithful_user = faithful_agent = None
    if tree.reduction is not None and user in tree.reduction and agent in tree.reduction:
        fu, fa = tree.reduction[user], tree.reduction[agent]
        if all(s.id in fu for s in user_sets) and all(s.id in fa for s in agent_sets):
            faithful_user = tuple(user_actions.index(fu[s.id]) for s in user_sets)
            faithful_agent = tuple(agent_actions.index(fa[s.id]) for s in agent_sets)

    probs = np.array([float(o.probability) for o in root.outcomes])
    return Environment(
        outcome_labels=tuple(o.label for o in root.outcomes),
        chance_cdf=np.cumsum(probs),
        user_sets=tuple(s.id for s in user_sets),
        user_actions=user_actions,
        agent_sets=tuple(s.id for s in agent_sets),
        agent_actions=agent_actions,
        user_obs=user_obs,
        agent_obs=agent_obs,
        reward_code=codes,
        reward_values=tuple(values),
        faithful_user=faithful_user,
        faithful_agent=faithful_agent,
    )


def _as_env(game: Union[GameTree, Environment]) -> Environment:
    return game if isinstance(game, Environment) else make_environment(game)


# --------------------------------------------------------------------------
# Policies and episodes
# --------------------------------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class PolicyTable:
    """Logit tables: ``user[observation, action]`` and ``agent[observation, action]``."""

    user: np.ndarray
    agent: np.ndarray

    @classmethod
    def zeros(cls, env: Environment) -> "PolicyTable":
        return cls(np.zeros((len(env.user_sets), len(env.user_actions))),
                   np.zeros((len(env.agent_sets), len(env.agent_actions))))

    def user_probs(self) -> np.ndarray:
        return softmax(self.user)

    def agent_probs(self) -> np.ndarray:
        return softmax(self.agent)

    def __eq__(self, other):
        if not isinstance(other, PolicyTable):
            return NotImplemented
        return np.array_equal(self.user, other.user) and np.array_equal(self.agent, other.agent)

    __hash__ = None


@dataclass(frozen=True)
class EpisodeRecord:
    destination: str
    user_action: str
    agent_action: str
    reward: Fraction
    user_obs: int
    user_act: int
    agent_obs: int
    agent_act: int


@dataclass(frozen=True)
class EpisodeBatch:
    """Struct-of-arrays batch used by the updates."""

    user_obs: np.ndarray
    user_act: np.ndarray
    agent_obs: np.ndarray
    agent_act: np.ndarray
    reward: np.ndarray  # float
    reward_code: np.ndarray

    def __len__(self):
        return len(self.reward)

    @classmethod
    def from_records(cls, records: Sequence[EpisodeRecord]) -> "EpisodeBatch":
        values = sorted({r.reward for r in records})
        return cls(
            np.array([r.user_obs for r in records], dtype=np.int64),
            np.array([r.user_act for r in records], dtype=np.int64),
            np.array([r.agent_obs for r in records], dtype=np.int64),
            np.array([r.agent_act for r in records], dtype=np.int64),
            np.array([float(r.reward) for r in records]),
            np.array([values.index(r.reward) for r in records], dtype=np.int8),
        )


def _pick(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = (u[:, None] >= cdf_rows).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def collect_batch(env: Environment, policies: PolicyTable, size: int, rng: np.random.Generator) -> tuple[EpisodeBatch, np.ndarray]:
    """Sample ``size`` episodes; also returns the chance outcome indices."""
    u = rng.random((size, 3))
    outcome = np.minimum(np.searchsorted(env.chance_cdf, u[:, 0], side="right"), len(env.chance_cdf) - 1)
    u_obs = env.user_obs[outcome]
    u_act = _pick(np.cumsum(policies.user_probs(), axis=1)[u_obs], u[:, 1])
    a_obs = env.agent_obs[outcome, u_act]
    a_act = _pick(np.cumsum(policies.agent_probs(), axis=1)[a_obs], u[:, 2])
    code = env.reward_code[outcome, u_act, a_act]
    return EpisodeBatch(u_obs, u_act, a_obs, a_act, env.reward_floats[code], code), outcome


def run_episode(tree: Union[GameTree, Environment], policies: PolicyTable, rng: np.random.Generator) -> EpisodeRecord:
    env = _as_env(tree)
    batch, outcome = collect_batch(env, policies, 1, rng)
    return EpisodeRecord(
        destination=env.outcome_labels[outcome[0]],
        user_action=env.user_actions[batch.user_act[0]],
        agent_action=env.agent_actions[batch.agent_act[0]],
        reward=env.reward_values[batch.reward_code[0]],
        user_obs=int(batch.user_obs[0]),
        user_act=int(batch.user_act[0]),
        agent_obs=int(batch.agent_obs[0]),
        agent_act=int(batch.agent_act[0]),
    )


# --------------------------------------------------------------------------
# Updates
# --------------------------------------------------------------------------


def _as_batch(batch) -> EpisodeBatch:
    if not isinstance(batch, EpisodeBatch):
        batch = EpisodeBatch.from_records(list(batch))
    if len(batch) == 0:
        raise EmptyBatch("cannot update from an empty batch")
    return batch


def _advantage(batch: EpisodeBatch, baseline: str) -> np.ndarray:
    if baseline == "batch-mean":
        return batch.reward - batch.reward.mean()
    return batch.reward


def _score_sum(logits: np.ndarray, obs, act, weight) -> np.ndarray:
    """sum_k weight_k * d log pi(act_k | obs_k) / d logits."""
    probs = softmax(logits)
    onehot = np.eye(logits.shape[1])[act]
    grad = np.zeros_like(logits)
    np.add.at(grad, obs, weight[:, None] * (onehot - probs[obs]))
    return grad


def pg_gradient(policies: PolicyTable, batch, baseline: str = "batch-mean") -> tuple[np.ndarray, np.ndarray]:
    """Gradient of ``sum (R - b) log pi(a|s)`` for both bots, summed over the batch."""
    batch = _as_batch(batch)
    adv = _advantage(batch, baseline)
    return (_score_sum(policies.user, batch.user_obs, batch.user_act, adv),
            _score_sum(policies.agent, batch.agent_obs, batch.agent_act, adv))


def pg_objective(policies: PolicyTable, batch, baseline: str = "batch-mean") -> float:
    batch = _as_batch(batch)
    adv = _advantage(batch, baseline)
    lu = np.log(policies.user_probs()[batch.user_obs, batch.user_act])
    la = np.log(policies.agent_probs()[batch.agent_obs, batch.agent_act])
    return float(np.sum(adv * (lu + la)))


def pg_update(policies: PolicyTable, batch, config: TrainConfig) -> PolicyTable:
    """REINFORCE step: accumulate ``lr (R - b)(1[a'=a] - pi(a'|s))`` then apply once."""
    gu, ga = pg_gradient(policies, batch, config.baseline)
    lr = config.learning_rate
    return PolicyTable(policies.user + lr * gu, policies.agent + lr * ga)


def _clip_active(ratio, adv, clip):
    # the clipped branch is selected (zero gradient) once the ratio has moved
    # past the bound in the direction the advantage favours
    return ~(((adv > 0) & (ratio >= 1 + clip)) | ((adv < 0) & (ratio <= 1 - clip)))


def ppo_gradient(policies: PolicyTable, old: PolicyTable, batch, clip: float) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the clipped surrogate ``sum min(r A, clip(r) A)`` per bot."""
    batch = _as_batch(batch)
    adv = _advantage(batch, "batch-mean")
    grads = []
    for new_l, old_l, obs, act in ((policies.user, old.user, batch.user_obs, batch.user_act),
                                   (policies.agent, old.agent, batch.agent_obs, batch.agent_act)):
        ratio = softmax(new_l)[obs, act] / softmax(old_l)[obs, act]
        weight = np.where(_clip_active(ratio, adv, clip), ratio * adv, 0.0)
        grads.append(_score_sum(new_l, obs, act, weight))
    return grads[0], grads[1]


def ppo_objective(policies: PolicyTable, old: PolicyTable, batch, clip: float) -> float:
    batch = _as_batch(batch)
    adv = _advantage(batch, "batch-mean")
    total = 0.0
    for new_l, old_l, obs, act in ((policies.user, old.user, batch.user_obs, batch.user_act),
                                   (policies.agent, old.agent, batch.agent_obs, batch.agent_act)):
        ratio = softmax(new_l)[obs, act] / softmax(old_l)[obs, act]
        total += float(np.sum(np.minimum(ratio * adv, np.clip(ratio, 1 - clip, 1 + clip) * adv)))
    return total


def ppo_update(policies: PolicyTable, batch, config: TrainConfig) -> PolicyTable:
    """``ppo_epochs`` full-batch ascent steps on the clipped surrogate.

    The behaviour policy is ``policies`` as passed in (frozen at collection).
    """
    batch = _as_batch(batch)
    current = policies
    for _ in range(config.ppo_epochs):
        gu, ga = ppo_gradient(current, policies, batch, config.ppo_clip)
        current = PolicyTable(current.user + config.learning_rate * gu, current.agent + config.learning_rate * ga)
    return current


# --------------------------------------------------------------------------
# Outcome rules
# --------------------------------------------------------------------------


def classify_restart(rewards: Sequence[Fraction]) -> str:
    """FULL / OPPOSITE when at least 2700 of the last 3000 rewards hit 11/10 / 1."""
    if len(rewards) < CLASSIFY_WINDOW:
        return UNDEFINED
    tail = list(rewards[-CLASSIFY_WINDOW:])
    if sum(r == FULL_REWARD for r in tail) >= CLASSIFY_HITS:
        return FULL
    if sum(r == OPPOSITE_REWARD for r in tail) >= CLASSIFY_HITS:
        return OPPOSITE
    return NONE


def convergence_time(rewards: Sequence[Fraction], window: int = CONVERGENCE_WINDOW,
                     threshold: Fraction = CONVERGENCE_THRESHOLD) -> Optional[int]:
    """Smallest ``i >= window`` with ``mean(rewards[i - window:i]) > threshold``, else None."""
    values = sorted({Fraction(r) for r in rewards})
    index = {v: k for k, v in enumerate(values)}
    codes = np.array([index[Fraction(r)] for r in rewards], dtype=np.int64)
    return _convergence_from_codes(codes, tuple(values), window, threshold)


def _convergence_from_codes(codes: np.ndarray, values: Sequence[Fraction], window: int = CONVERGENCE_WINDOW,
                            threshold: Fraction = CONVERGENCE_THRESHOLD) -> Optional[int]:
    # exact: rewards are scaled to integers over their common denominator
    if len(codes) < window:
        return None
    denom = int(np.lcm.reduce([v.denominator for v in values] + [threshold.denominator]))
    scaled = np.array([int(v * denom) for v in values], dtype=np.int64)[codes]
    csum = np.concatenate(([0], np.cumsum(scaled)))
    sums = csum[window:] - csum[:-window]  # sums[k] covers rewards[k:k + window]
    bound = threshold * window * denom
    hits = np.nonzero(sums * bound.denominator > bound.numerator)[0]
    if len(hits) == 0:
        return None
    return int(hits[0]) + window


def policy_convention(env_or_tree, policies: PolicyTable) -> str:
    """TRUTHFUL, OPPOSITE or OTHER, from the bots' modal actions.

    OPPOSITE means every user row prefers an unfaithful message and every
    agent row prefers to disobey it.
    """
    env = _as_env(env_or_tree)
    if env.faithful_user is None:
        raise ShapeMismatch("game carries no faithful-action annotation")
    u_mode = np.argmax(policies.user_probs(), axis=1)
    a_mode = np.argmax(policies.agent_probs(), axis=1)
    u_true = [int(m) == f for m, f in zip(u_mode, env.faithful_user)]
    a_obey = [int(m) == f for m, f in zip(a_mode, env.faithful_agent)]
    if all(u_true) and all(a_obey):
        return "TRUTHFUL"
    if not any(u_true) and not any(a_obey):
        return "OPPOSITE"
    return "OTHER"


# --------------------------------------------------------------------------
# Restarts and experiments
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RestartResult:
    algorithm: str
    seed: int
    reward_codes: np.ndarray = field(repr=False)
    reward_values: tuple[Fraction, ...]
    outcome: str
    convergence_episode: Optional[int]
    convergence_seconds: float
    wall_time: float
    policies: PolicyTable = field(repr=False)
    episodes_per_iteration: int = 300

    @property
    def rewards(self) -> list[Fraction]:
        return [self.reward_values[c] for c in self.reward_codes]

    @property
    def episodes(self) -> int:
        return len(self.reward_codes)

    def digest(self) -> str:
        """SHA-256 of the exact episode reward stream."""
        h = hashlib.sha256()
        h.update(",".join(f"{v.numerator}/{v.denominator}" for v in self.reward_values).encode())
        h.update(np.ascontiguousarray(self.reward_codes, dtype=np.int8).tobytes())
        return h.hexdigest()

    def same_run(self, other: "RestartResult") -> bool:
        """Equality ignoring wall-clock fields."""
        return (self.algorithm == other.algorithm and self.seed == other.seed
                and np.array_equal(self.reward_codes, other.reward_codes)
                and self.reward_values == other.reward_values
                and self.outcome == other.outcome
                and self.convergence_episode == other.convergence_episode
                and self.policies == other.policies)


def run_restart(tree: Union[GameTree, Environment], config: TrainConfig) -> RestartResult:
    """One training run from all-zero logits."""
    env = _as_env(tree)
    rng = np.random.Generator(np.random.Philox(config.seed))
    update = pg_update if config.algorithm == "pg" else ppo_update
    policies = PolicyTable.zeros(env)
    codes = []
    stamps = []
    start = time.perf_counter()
    for _ in range(config.iterations):
        batch, _ = collect_batch(env, policies, config.episodes_per_iteration, rng)
        codes.append(batch.reward_code)
        policies = update(policies, batch, config)
        stamps.append(time.perf_counter() - start)
    wall = time.perf_counter() - start
    reward_codes = np.concatenate(codes) if codes else np.zeros(0, dtype=np.int8)

    values = env.reward_values
    outcome = classify_restart([values[c] for c in reward_codes[-CLASSIFY_WINDOW:]]) \
        if len(reward_codes) >= CLASSIFY_WINDOW else UNDEFINED
    conv = _convergence_from_codes(reward_codes, values)
    if conv is None:
        conv_seconds = wall
    else:
        conv_seconds = stamps[(conv - 1) // config.episodes_per_iteration]
    return RestartResult(
        algorithm=config.algorithm,
        seed=config.seed,
        reward_codes=reward_codes,
        reward_values=values,
        outcome=outcome,
        convergence_episode=conv,
        convergence_seconds=conv_seconds,
        wall_time=wall,
        policies=policies,
        episodes_per_iteration=config.episodes_per_iteration,
    )


@dataclass(frozen=True)
class AlgorithmReport:
    algorithm: str
    config: TrainConfig
    results: tuple[RestartResult, ...]

    @property
    def counts(self) -> dict[str, int]:
        counts = {o: 0 for o in OUTCOMES}
        for r in self.results:
            counts[r.outcome] += 1
        return counts

    @property
    def mean_convergence_episodes(self) -> Optional[float]:
        """Mean convergence episode, counting non-converged restarts at full length."""
        if not self.results:
            return None
        vals = [r.convergence_episode if r.convergence_episode is not None else r.episodes for r in self.results]
        return float(np.mean(vals))

    @property
    def mean_convergence_seconds(self) -> Optional[float]:
        if not self.results:
            return None
        return float(np.mean([r.convergence_seconds for r in self.results]))


@dataclass(frozen=True)
class ExperimentReport:
    sections: tuple[AlgorithmReport, ...]

    def section(self, algorithm: str) -> AlgorithmReport:
        for s in self.sections:
            if s.algorithm == algorithm:
                return s
        raise KeyError(algorithm)

    def counts(self, algorithm: str) -> dict[str, int]:
        return self.section(algorithm).counts

    @classmethod
    def combine(cls, *reports: "ExperimentReport") -> "ExperimentReport":
        return cls(tuple(s for r in reports for s in r.sections))


def _restart_job(args):
    env, config = args
    return run_restart(env, config)


def run_experiment(tree: Union[GameTree, Environment], config: TrainConfig, restarts: int,
                   parallelism: int = 1) -> ExperimentReport:
    """``restarts`` independent runs; restart ``i`` uses seed ``config.seed + i``."""
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    env = _as_env(tree)
    jobs = [(env, replace(config, seed=config.seed + i)) for i in range(restarts)]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_restart_job, jobs))
    else:
        results = [_restart_job(j) for j in jobs]
    results.sort(key=lambda r: r.seed)
    return ExperimentReport((AlgorithmReport(config.algorithm, config, tuple(results)),))
