import argparse
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from core.errors import ConfigError, MetricsFormatError, TrainingAbortedError

logger = logging.getLogger("app")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ABORT = 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="fichier clé=valeur (défauts sinon)")
    p.add_argument("--out", type=Path, default=Path("runs"), help="répertoire de sortie")
    p.add_argument("--row", default=None, help="ligne de grille: baseline, first_order_both, "
                                              "second_order_good, second_order_adv")
    p.add_argument("--steps", type=int, default=None, help="budget total de pas d'environnement")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="app.py", description="Theory-of-mind intrinsic reward experiments")
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="entraîne une cellule (ligne, graine)")
    _add_common(p)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("evaluate", help="évalue un checkpoint et écrit les trajectoires")
    _add_common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--deterministic", action="store_true")

    p = sub.add_parser("grid", help="grille 4 configurations x graines")
    _add_common(p)
    p.add_argument("--seed", type=int, action="append", default=None, help="répétable; défaut = seeds du fichier")

    p = sub.add_parser("plot", help="courbes d'entraînement moyennées sur les graines")
    p.add_argument("metrics", nargs="+", type=Path, help="fichiers metrics.csv ou répertoires")
    p.add_argument("--out", type=Path, default=Path("plots"))
    return parser


def _load(args):
    from core.services.config_service import load_config

    config = load_config(args.config)
    if args.row:
        config = config.with_row(args.row)
    return config.with_steps(args.steps)


def cmd_train(args) -> int:
    from core.services.grid_service import run_cell

    config = _load(args)
    cell = run_cell(config, args.seed, args.out)
    print(f"good={cell.mean_good:.4f} (var {cell.var_good:.4f})  adv={cell.mean_adv:.4f} (var {cell.var_adv:.4f})")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from core.services.evaluation_service import evaluate_policy
    from core.storage.checkpoint import load_checkpoint

    config = _load(args)
    ckpt = load_checkpoint(args.checkpoint)
    result = evaluate_policy(
        ckpt.policies["good"], ckpt.policies["adversary"], config.env,
        args.episodes or config.eval_episodes, args.seed,
        deterministic=args.deterministic, dump_dir=args.out / "trajectories",
    )
    print(f"good={result.mean_good:.4f} (var {result.var_good:.4f})  adv={result.mean_adv:.4f} (var {result.var_adv:.4f})")
    return EXIT_OK


def cmd_grid(args) -> int:
    from core.services.grid_service import GridService

    config = _load(args)
    rows = [args.row] if args.row else None
    summaries = GridService(args.out).run_grid(config, seeds=args.seed, rows=rows, steps=args.steps)
    for s in summaries:
        print(f"{s.row:<20} good={s.reward_good:8.3f} (±{s.var_good:.2f})  adv={s.reward_adv:8.3f} (±{s.var_adv:.2f})")
    return EXIT_OK


def cmd_plot(args) -> int:
    from core.services.plot_service import plot_curves

    for path in plot_curves(args.metrics, args.out):
        print(path)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "grid": cmd_grid, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValidationError) as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except TrainingAbortedError as exc:
        logger.error("%s", exc)
        return EXIT_ABORT
    except (MetricsFormatError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
