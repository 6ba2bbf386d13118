"""Two-parameter reduced strategy space and its expected-reward surface.

The user plays its annotated "faithful" action with probability ``x`` at
every information set; the agent plays its annotated "obedient" action
with probability ``y``. Remaining mass is spread evenly over the other
actions.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional

from .errors import MissingAnnotation
from .game_core import BehaviorProfile, BehaviorStrategy, GameTree, ReducedProfile, expected_reward


@dataclass(frozen=True)
class SurfaceGrid:
    resolution: int
    rows: tuple[tuple[Fraction, Fraction, Fraction], ...]  # (x, y, expected reward)


def _annotation(tree: GameTree, annotation):
    annotation = annotation if annotation is not None else tree.reduction
    if annotation is None:
        raise MissingAnnotation("game has no faithful-action annotation")
    for s in tree.info_sets:
        if s.id not in annotation.get(s.player, {}):
            raise MissingAnnotation(f"annotation does not cover information set {s.id!r} ({s.player})")
    return annotation


def reduced_profile_to_behavior(tree: GameTree, annotation: Optional[Mapping], p: ReducedProfile) -> BehaviorProfile:
    annotation = _annotation(tree, annotation)
    strategies = []
    for player, level in zip(tree.players, (p.x, p.y)):
        probs = {}
        for s in tree.info_sets_of(player):
            faithful = annotation[player][s.id]
            k = len(s.actions)
            if k == 1:
                probs[s.id] = (Fraction(1),)
                continue
            rest = (1 - level) / (k - 1)
            probs[s.id] = tuple(level if a == faithful else rest for a in s.actions)
        strategies.append(BehaviorStrategy(player, probs))
    return BehaviorProfile(*strategies)


def reduced_reward(tree: GameTree, x, y, annotation=None) -> Fraction:
    profile = reduced_profile_to_behavior(tree, annotation, ReducedProfile(Fraction(x), Fraction(y)))
    return expected_reward(tree, profile)[0]


def surface_grid(tree: GameTree, annotation=None, resolution: int = 41) -> SurfaceGrid:
    """Evaluate the reduced reward on a ``resolution x resolution`` grid over [0, 1]^2."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    annotation = _annotation(tree, annotation)
    steps = [Fraction(i, resolution - 1) for i in range(resolution)]
    rows = tuple((x, y, reduced_reward(tree, x, y, annotation)) for x in steps for y in steps)
    return SurfaceGrid(resolution, rows)


def bilinear_coefficients(tree: GameTree, annotation=None) -> tuple[Fraction, Fraction, Fraction, Fraction]:
    """``(c0, cx, cy, cxy)`` with ``E(x, y) = c0 + cx x + cy y + cxy x y``.

    Fitted from the four corners. Raises ValueError when the surface is
    not bilinear (games where a player moves more than once on a path).
    """
    annotation = _annotation(tree, annotation)
    e00, e10, e01, e11 = (reduced_reward(tree, x, y, annotation) for x, y in ((0, 0), (1, 0), (0, 1), (1, 1)))
    coeffs = (e00, e10 - e00, e01 - e00, e11 - e10 - e01 + e00)
    for x, y in ((Fraction(1, 3), Fraction(2, 7)), (Fraction(5, 11), Fraction(9, 13))):
        c0, cx, cy, cxy = coeffs
        if reduced_reward(tree, x, y, annotation) != c0 + cx * x + cy * y + cxy * x * y:
            raise ValueError("reduced reward surface is not bilinear")
    return coeffs


def stationary_point(tree: GameTree, annotation=None) -> Optional[tuple[Fraction, Fraction, Fraction]]:
    """``(x, y, E)`` where both partial derivatives vanish, or None if degenerate."""
    c0, cx, cy, cxy = bilinear_coefficients(tree, annotation)
    if cxy == 0:
        return None
    x, y = -cy / cxy, -cx / cxy
    return x, y, c0 + cx * x + cy * y + cxy * x * y


def central_differences(tree: GameTree, x, y, h=Fraction(1, 1000), annotation=None) -> tuple[Fraction, Fraction]:
    """Exact central finite differences of the reduced reward at ``(x, y)``."""
    x, y, h = Fraction(x), Fraction(y), Fraction(h)
    dx = (reduced_reward(tree, x + h, y, annotation) - reduced_reward(tree, x - h, y, annotation)) / (2 * h)
    dy = (reduced_reward(tree, x, y + h, annotation) - reduced_reward(tree, x, y - h, annotation)) / (2 * h)
    return dx, dy
