"""JSON and CSV serialization of solver, playback, surface and experiment results.

Output is deterministic: identical input gives identical bytes. Rationals
appear as ``"p/q"`` strings in JSON, and as a ``p/q`` column plus a
``_decimal`` column in CSV.
"""

from __future__ import annotations

import csv
import io
import json
from fractions import Fraction
from typing import Any, Optional, Sequence

from .equilibrium import DeviationCertificate, EquilibriumRecord, PlaybackStats
from .game_core import GameTree
from .gamefile import atomic_write
from .rational import format_decimal, format_rational
from .selfplay_rl import CLASSIFY_WINDOW, AlgorithmReport, ExperimentReport, RestartResult
from .surface import SurfaceGrid

JSON = "json"
CSV = "csv"

_R = format_rational


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# -- equilibria --------------------------------------------------------------


def _probability_columns(tree: GameTree):
    return [(s.player, s.id, a) for s in tree.info_sets for a in s.actions]


def record_to_dict(record: EquilibriumRecord, tree: Optional[GameTree] = None) -> dict:
    doc: dict[str, Any] = {
        "expected_reward": _R(record.reward),
        "payoffs": [_R(v) for v in record.payoffs],
        "mixed": {record.user.player: [_R(p) for p in record.user.probs],
                  record.agent.player: [_R(p) for p in record.agent.probs]},
        "supports": [list(s) for s in record.supports],
        "basis": [list(b) for b in record.basis],
    }
    if record.behavior is not None and tree is not None:
        doc["behavior"] = {
            strat.player: {
                set_id: {a: _R(p) for a, p in zip(tree.info_set(set_id).actions, dist)}
                for set_id, dist in strat.probs.items()
            }
            for strat in record.behavior.strategies()
        }
    return doc


def records_json(records: Sequence[EquilibriumRecord], tree: Optional[GameTree] = None,
                 best: Optional[int] = None) -> str:
    doc: dict[str, Any] = {"count": len(records), "equilibria": [record_to_dict(r, tree) for r in records]}
    if best is not None:
        doc["best"] = best
    return _dumps(doc)


def records_csv(records: Sequence[EquilibriumRecord], tree: GameTree) -> str:
    cols = _probability_columns(tree)
    header = ["equilibrium"]
    for player, set_id, action in cols:
        name = f"{player}:{set_id}:{action}"
        header += [name, f"{name}_decimal"]
    header += ["expected_reward", "expected_reward_decimal"]
    rows = []
    for k, r in enumerate(records, start=1):
        row = [f"#{k}"]
        for player, set_id, action in cols:
            s = tree.info_set(set_id)
            p = r.behavior.for_player(player).probs[set_id][s.actions.index(action)]
            row += [_R(p), format_decimal(p)]
        row += [_R(r.reward), format_decimal(r.reward)]
        rows.append(row)
    return _csv(header, rows)


# -- certificates, playback, surface -------------------------------------------


def certificate_json(cert: DeviationCertificate, players=("USER", "AGENT")) -> str:
    doc = {
        "is_equilibrium": cert.is_equilibrium,
        "players": {
            name: {"current": _R(d.current), "best": _R(d.best), "gain": _R(d.gain),
                   "best_responses": list(d.best_responses)}
            for name, d in zip(players, (cert.user, cert.agent))
        },
    }
    return _dumps(doc)


def playback_json(stats: PlaybackStats, log_limit: int = 20) -> str:
    doc = {
        "episodes": stats.episodes,
        "mean_reward": _R(stats.mean),
        "mean_reward_decimal": format_decimal(stats.mean),
        "mean_per_player": [_R(v) for v in stats.mean_per_player],
        "histogram": {_R(k): v for k, v in stats.histogram.items()},
        "log_head": [{"path": list(e.path), "payoffs": [_R(v) for v in e.payoffs]} for e in stats.log[:log_limit]],
    }
    return _dumps(doc)


def surface_json(grid: SurfaceGrid) -> str:
    return _dumps({"resolution": grid.resolution,
                   "points": [{"x": _R(x), "y": _R(y), "reward": _R(e)} for x, y, e in grid.rows]})


def surface_csv(grid: SurfaceGrid) -> str:
    rows = [[_R(x), format_decimal(x), _R(y), format_decimal(y), _R(e), format_decimal(e)] for x, y, e in grid.rows]
    return _csv(["x", "x_decimal", "y", "y_decimal", "reward", "reward_decimal"], rows)


# -- experiments -------------------------------------------------------------


def _tail_mean(result: RestartResult) -> Fraction:
    tail = result.rewards[-CLASSIFY_WINDOW:]
    return sum(tail, Fraction(0)) / len(tail) if tail else Fraction(0)


def _restart_dict(i: int, r: RestartResult, include_timing: bool) -> dict:
    doc: dict[str, Any] = {
        "restart": i,
        "seed": r.seed,
        "outcome": r.outcome,
        "episodes": r.episodes,
        "convergence_episode": r.convergence_episode,
        "tail_mean_reward": _R(_tail_mean(r)),
        "reward_digest": r.digest(),
        "final_policy": {
            "user": [[format_decimal(p) for p in row] for row in r.policies.user_probs()],
            "agent": [[format_decimal(p) for p in row] for row in r.policies.agent_probs()],
        },
    }
    if include_timing:
        doc["convergence_seconds"] = r.convergence_seconds
        doc["wall_time"] = r.wall_time
    return doc


def _section_dict(s: AlgorithmReport, include_timing: bool) -> dict:
    c = s.config
    doc: dict[str, Any] = {
        "algorithm": s.algorithm,
        "config": {
            "iterations": c.iterations,
            "episodes_per_iteration": c.episodes_per_iteration,
            "learning_rate": c.learning_rate,
            "baseline": c.baseline,
            "ppo_clip": c.ppo_clip,
            "ppo_epochs": c.ppo_epochs,
            "seed": c.seed,
        },
        "restarts": len(s.results),
        "counts": s.counts,
        "mean_convergence_episodes": s.mean_convergence_episodes,
    }
    if include_timing:
        doc["mean_convergence_seconds"] = s.mean_convergence_seconds
    doc["results"] = [_restart_dict(i, r, include_timing) for i, r in enumerate(s.results)]
    return doc


def experiment_json(report: ExperimentReport, include_timing: bool = True) -> str:
    return _dumps({"algorithms": [_section_dict(s, include_timing) for s in report.sections]})


def experiment_csv(report: ExperimentReport, include_timing: bool = True) -> str:
    header = ["algorithm", "restart", "seed", "outcome", "episodes", "convergence_episode",
              "tail_mean_reward", "tail_mean_reward_decimal", "reward_digest"]
    if include_timing:
        header += ["convergence_seconds", "wall_time"]
    rows = []
    for s in report.sections:
        for i, r in enumerate(s.results):
            tail = _tail_mean(r)
            row = [s.algorithm, i, r.seed, r.outcome, r.episodes,
                   "" if r.convergence_episode is None else r.convergence_episode,
                   _R(tail), format_decimal(tail), r.digest()]
            if include_timing:
                row += [repr(r.convergence_seconds), repr(r.wall_time)]
            rows.append(row)
    return _csv(header, rows)


# -- dispatch ----------------------------------------------------------------


def render(obj, fmt: str = JSON, tree: Optional[GameTree] = None, include_timing: bool = True) -> str:
    """Serialize any supported result object to text."""
    if fmt not in (JSON, CSV):
        raise ValueError(f"unknown format {fmt!r}")
    if isinstance(obj, ExperimentReport):
        return experiment_json(obj, include_timing) if fmt == JSON else experiment_csv(obj, include_timing)
    if isinstance(obj, SurfaceGrid):
        return surface_json(obj) if fmt == JSON else surface_csv(obj)
    if isinstance(obj, (list, tuple)) and all(isinstance(r, EquilibriumRecord) for r in obj):
        if fmt == CSV:
            if tree is None:
                raise ValueError("CSV output of equilibria needs the game tree")
            return records_csv(obj, tree)
        return records_json(obj, tree)
    if isinstance(obj, PlaybackStats) and fmt == JSON:
        return playback_json(obj)
    if isinstance(obj, DeviationCertificate) and fmt == JSON:
        return certificate_json(obj, tree.players if tree is not None else ("USER", "AGENT"))
    raise TypeError(f"cannot render {type(obj).__name__} as {fmt}")


def emit_report(obj, fmt: str = JSON, path=None, tree: Optional[GameTree] = None,
                include_timing: bool = True) -> str:
    """Render ``obj`` and write it atomically to ``path`` (if given). Returns the text."""
    text = render(obj, fmt, tree, include_timing)
    if path is not None:
        atomic_write(path, text)
    return text
