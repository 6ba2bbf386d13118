"""Game and profile files (JSON text; every rational is a ``"p/q"`` string)."""

from __future__ import annotations

import json
import os
import tempfile
from importlib import resources
from pathlib import Path
from typing import Any

from .errors import ParseError
from .game_core import (
    CHANCE_KIND,
    DECISION_KIND,
    TERMINAL_KIND,
    BehaviorProfile,
    BranchSpec,
    GameSpec,
    GameTree,
    NodeSpec,
    behavior_strategy,
    build_game,
)
from .rational import format_rational, parse_rational

FORMAT_VERSION = 1
BUNDLED_GAME = "trip_booking.game"


def bundled_game_path() -> Path:
    return Path(str(resources.files("dialog_selfplay") / "data" / BUNDLED_GAME))


def atomic_write(path, data: str) -> None:
    """Write ``data`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_json(text: str, source: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"{source}:{exc.lineno}:{exc.colno}") from None


def _require(obj, key, where, kind=None):
    if not isinstance(obj, dict):
        raise ParseError("expected an object", where)
    if key not in obj:
        raise ParseError(f"missing field {key!r}", where)
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise ParseError(f"field {key!r} has the wrong type ({type(value).__name__})", f"{where}.{key}")
    return value


def parse_game_spec(text: str, source: str = "<game>") -> GameSpec:
    """Parse game-file text into a :class:`GameSpec` (structure only)."""
    doc = _load_json(text, source)
    version = _require(doc, "format_version", source, int)
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {version}", f"{source}.format_version")
    players = _require(doc, "players", source, list)
    if not all(isinstance(p, str) for p in players):
        raise ParseError("players must be strings", f"{source}.players")
    root = doc.get("root")
    if root is not None and not isinstance(root, str):
        raise ParseError("root must be a string", f"{source}.root")

    nodes = []
    for i, raw in enumerate(_require(doc, "nodes", source, list)):
        where = f"{source}.nodes[{i}]"
        nid = _require(raw, "id", where, str)
        kind = _require(raw, "kind", where, str)
        if kind == CHANCE_KIND:
            branches = tuple(
                BranchSpec(
                    _require(o, "label", f"{where}.outcomes[{k}]", str),
                    _require(o, "child", f"{where}.outcomes[{k}]", str),
                    parse_rational(_require(o, "probability", f"{where}.outcomes[{k}]"),
                                   f"{where}.outcomes[{k}].probability"),
                )
                for k, o in enumerate(_require(raw, "outcomes", where, list))
            )
            nodes.append(NodeSpec(nid, kind, branches=branches))
        elif kind == DECISION_KIND:
            branches = tuple(
                BranchSpec(_require(a, "label", f"{where}.actions[{k}]", str),
                           _require(a, "child", f"{where}.actions[{k}]", str))
                for k, a in enumerate(_require(raw, "actions", where, list))
            )
            nodes.append(NodeSpec(nid, kind, player=_require(raw, "player", where, str),
                                  info_set=_require(raw, "info_set", where, str), branches=branches))
        elif kind == TERMINAL_KIND:
            payoffs = _require(raw, "payoffs", where, dict)
            nodes.append(NodeSpec(nid, kind, payoffs={
                p: parse_rational(v, f"{where}.payoffs.{p}") for p, v in payoffs.items()}))
        else:
            raise ParseError(f"unknown node kind {kind!r}", f"{where}.kind")

    reduction = doc.get("reduction")
    if reduction is not None:
        if not isinstance(reduction, dict) or not all(
                isinstance(m, dict) and all(isinstance(k, str) and isinstance(v, str) for k, v in m.items())
                for m in reduction.values()):
            raise ParseError("reduction must map player -> {info_set: action label}", f"{source}.reduction")
    return GameSpec(players=tuple(players), nodes=tuple(nodes), root=root, reduction=reduction,
                    format_version=version)


def load_game_file(path) -> GameSpec:
    """Read, parse and validate a game file. Returns the spec."""
    path = Path(path)
    spec = parse_game_spec(path.read_text(encoding="utf-8"), str(path))
    build_game(spec)
    return spec


def load_game(path=None) -> GameTree:
    """Tree from ``path``, or the bundled trip-booking game."""
    return build_game(load_game_file(path if path is not None else bundled_game_path()))


def dump_game_spec(spec: GameSpec) -> str:
    nodes = []
    for n in spec.nodes:
        if n.kind == CHANCE_KIND:
            nodes.append({"id": n.id, "kind": n.kind, "outcomes": [
                {"label": b.label, "probability": format_rational(b.probability), "child": b.child}
                for b in n.branches]})
        elif n.kind == DECISION_KIND:
            nodes.append({"id": n.id, "kind": n.kind, "player": n.player, "info_set": n.info_set,
                          "actions": [{"label": b.label, "child": b.child} for b in n.branches]})
        else:
            nodes.append({"id": n.id, "kind": n.kind,
                          "payoffs": {p: format_rational(v) for p, v in n.payoffs.items()}})
    doc = {"format_version": spec.format_version, "players": list(spec.players)}
    if spec.root is not None:
        doc["root"] = spec.root
    doc["nodes"] = nodes
    if spec.reduction is not None:
        doc["reduction"] = {p: dict(m) for p, m in spec.reduction.items()}
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def write_game_file(spec: GameSpec, path) -> None:
    atomic_write(path, dump_game_spec(spec))


# --------------------------------------------------------------------------
# Profile files
# --------------------------------------------------------------------------


def parse_profile(text: str, tree: GameTree, source: str = "<profile>") -> BehaviorProfile:
    doc = _load_json(text, source)
    version = _require(doc, "format_version", source, int)
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {version}", f"{source}.format_version")
    strategies = []
    for player in tree.players:
        raw = _require(doc, player, source, dict)
        probs = {}
        for set_id, dist in raw.items():
            if not isinstance(dist, dict):
                raise ParseError("expected {action: probability}", f"{source}.{player}.{set_id}")
            probs[set_id] = {a: parse_rational(p, f"{source}.{player}.{set_id}.{a}") for a, p in dist.items()}
        try:
            strategies.append(behavior_strategy(tree, player, probs))
        except ValueError as exc:
            raise ParseError(str(exc), f"{source}.{player}") from None
    return BehaviorProfile(*strategies)


def load_profile_file(path, tree: GameTree) -> BehaviorProfile:
    path = Path(path)
    return parse_profile(path.read_text(encoding="utf-8"), tree, str(path))


def dump_profile(tree: GameTree, profile: BehaviorProfile) -> str:
    doc: dict[str, Any] = {"format_version": FORMAT_VERSION}
    for strat in profile.strategies():
        doc[strat.player] = {
            set_id: {a: format_rational(p) for a, p in zip(tree.info_set(set_id).actions, dist)}
            for set_id, dist in strat.probs.items()
        }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"

