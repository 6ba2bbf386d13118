"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 parse/validation error,
3 internal verification failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

from . import report
from .equilibrium import enumerate_equilibria, is_equilibrium, play_strategy, select_best_equilibrium
from .errors import GameError, InternalVerificationFailure, MissingAnnotation, ParseError, ValidationError
from .gamefile import atomic_write, load_game, load_profile_file
from .normal_form import mixed_from_behavior, reduce_to_normal_form
from .selfplay_rl import ExperimentReport, TrainConfig, run_experiment
from .surface import central_differences, stationary_point, surface_grid

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_INTERNAL = 3

log = logging.getLogger("dialog_selfplay")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _non_negative(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dialog-selfplay", description="Equilibrium and RL self-play for dialog games.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, formats=("json", "csv")):
        p.add_argument("--game", help="game file (default: bundled trip_booking.game)")
        p.add_argument("--format", choices=formats, default="json")
        p.add_argument("--out", help="output path (default: stdout)")

    p = sub.add_parser("solve", help="enumerate equilibria and select the best")
    common(p)

    p = sub.add_parser("verify", help="equilibrium certificate for a profile file")
    common(p, ("json",))
    p.add_argument("--profile", required=True)

    p = sub.add_parser("play", help="play a profile (default: best equilibrium) on sampled episodes")
    common(p, ("json",))
    p.add_argument("--profile")
    p.add_argument("--episodes", type=_positive, default=10000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("selfplay", help="RL self-play restart experiment")
    common(p)
    p.add_argument("--algo", choices=("pg", "ppo"), action="append",
                   help="repeatable; default runs pg then ppo")
    p.add_argument("--restarts", type=_positive, default=100)
    p.add_argument("--iterations", type=_non_negative, default=90)
    p.add_argument("--episodes-per-iter", type=_positive, default=300)
    p.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    p.add_argument("--baseline", choices=("none", "batch-mean"), default="batch-mean")
    p.add_argument("--ppo-clip", type=float, default=TrainConfig.ppo_clip)
    p.add_argument("--ppo-epochs", type=_positive, default=TrainConfig.ppo_epochs)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallel", type=_positive, default=1)
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock fields")

    p = sub.add_parser("surface", help="reduced-strategy reward grid")
    common(p)
    p.add_argument("--resolution", type=int, default=41)
    return parser


def _write(text: str, out) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def cmd_solve(args) -> None:
    tree = load_game(args.game)
    start = time.perf_counter()
    records = enumerate_equilibria(reduce_to_normal_form(tree))
    best = select_best_equilibrium(records)
    log.info("%d equilibria in %.3f s; best reward %s", len(records), time.perf_counter() - start, best.reward)
    if args.format == "csv":
        text = report.records_csv(records, tree)
    else:
        text = report.records_json(records, tree, best=records.index(best))
    _write(text, args.out)


def cmd_verify(args) -> None:
    tree = load_game(args.game)
    profile = load_profile_file(args.profile, tree)
    game = reduce_to_normal_form(tree)
    cert = is_equilibrium(game, mixed_from_behavior(tree, profile.user), mixed_from_behavior(tree, profile.agent))
    _write(report.certificate_json(cert, tree.players), args.out)


def cmd_play(args) -> None:
    tree = load_game(args.game)
    if args.profile:
        profile = load_profile_file(args.profile, tree)
    else:
        profile = select_best_equilibrium(enumerate_equilibria(reduce_to_normal_form(tree))).behavior
    stats = play_strategy(tree, profile, args.episodes, args.seed)
    _write(report.playback_json(stats), args.out)


def cmd_selfplay(args) -> None:
    tree = load_game(args.game)
    try:
        configs = [
            TrainConfig(algorithm=algo, iterations=args.iterations, episodes_per_iteration=args.episodes_per_iter,
                        learning_rate=args.lr, baseline=args.baseline, ppo_clip=args.ppo_clip,
                        ppo_epochs=args.ppo_epochs, seed=args.seed)
            for algo in (args.algo or ["pg", "ppo"])
        ]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    reports = []
    for config in configs:
        rep = run_experiment(tree, config, args.restarts, args.parallel)
        log.info("%s: %s", config.algorithm, rep.sections[0].counts)
        reports.append(rep)
    combined = ExperimentReport.combine(*reports)
    _write(report.render(combined, args.format, include_timing=not args.no_timing), args.out)


def cmd_surface(args) -> None:
    if args.resolution < 2:
        raise UsageError("--resolution must be >= 2")
    tree = load_game(args.game)
    grid = surface_grid(tree, resolution=args.resolution)
    point = stationary_point(tree)
    if point is not None:
        dx, dy = central_differences(tree, point[0], point[1])
        log.info("stationary point x=%s y=%s reward=%s (finite differences %s, %s)",
                 point[0], point[1], point[2], float(dx), float(dy))
    _write(report.surface_json(grid) if args.format == "json" else report.surface_csv(grid), args.out)


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "play": cmd_play,
    "selfplay": cmd_selfplay,
    "surface": cmd_surface,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"dialog-selfplay: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InternalVerificationFailure as exc:
        print(f"dialog-selfplay: internal verification failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ParseError, ValidationError, MissingAnnotation) as exc:
        print(f"dialog-selfplay: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (GameError, OSError) as exc:
        print(f"dialog-selfplay: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
