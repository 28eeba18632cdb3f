"""Command line interface.

    pest gen-task     --seed 42 --out runs/task
    pest pretrain     --seed 42 --out runs/pretrain
    pest adapt        --mode pest --seed 42 --out runs/adapt
    pest run          --config plan.json --seed 42 --out runs/full
    pest ablation     --seed 42 --out runs/ablation
    pest lambda-sweep --seed 42 --out runs/sweep
    pest baselines    --seed 42 --out runs/baselines

Exit codes: 0 on success, 1 for usage or configuration errors, 2 for runtime
numeric errors.  All diagnostics go to stderr.
"""

import argparse
import sys

from . import harness
from .exceptions import ConfigError, CorruptFileError, FormatVersionError, PestError
from .selftrain import MODES


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=42, help="global seed (default 42)")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--eq4-raw-weights",
        action="store_true",
        help="keep signed agreement weights in language fusion",
    )
    parser.add_argument(
        "--eq7-raw-product",
        action="store_true",
        help="keep the unclamped similarity product in fused pseudo-labeling",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-task", help="generate and serialize a synthetic task")
    _common_flags(p)
    p.set_defaults(func=_dispatch_gen_task)

    p = sub.add_parser("pretrain", help="contrastively pretrain the encoders")
    _common_flags(p)
    p.add_argument("--task", help="serialized task file (default: generate from config)")
    p.set_defaults(func=_dispatch_pretrain)

    p = sub.add_parser("adapt", help="run one adaptation mode")
    _common_flags(p)
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--task", help="serialized task file (default: generate from config)")
    p.add_argument("--image-encoder", help="pretrained image encoder checkpoint")
    p.add_argument("--text-encoder", help="pretrained text encoder checkpoint")
    p.set_defaults(func=_dispatch_adapt)

    p = sub.add_parser("run", help="execute a full plan from the config")
    _common_flags(p)
    p.set_defaults(func=_dispatch_run)

    p = sub.add_parser("ablation", help="run the six-mode component ablation")
    _common_flags(p)
    p.set_defaults(func=_dispatch_ablation)

    p = sub.add_parser("lambda-sweep", help="sweep the temporal retention factor")
    _common_flags(p)
    p.add_argument(
        "--lambdas",
        help="comma-separated retention factors (default 0.9,0.99,0.999,0.9999)",
    )
    p.set_defaults(func=_dispatch_lambda_sweep)

    p = sub.add_parser("baselines", help="run the prompt-averaging baselines")
    _common_flags(p)
    p.set_defaults(func=_dispatch_baselines)

    return parser


def _config_of(args) -> dict:
    if args.config is None:
        return {}
    return harness.load_config(args.config)


def _flag_kwargs(args) -> dict:
    return {
        "eq4_raw_weights": args.eq4_raw_weights,
        "eq7_raw_product": args.eq7_raw_product,
    }


def _dispatch_gen_task(args) -> int:
    harness.cmd_gen_task(_config_of(args), args.seed, args.out)
    return 0


def _dispatch_pretrain(args) -> int:
    harness.cmd_pretrain(_config_of(args), args.seed, args.out, task_path=args.task)
    return 0


def _dispatch_adapt(args) -> int:
    harness.cmd_adapt(
        _config_of(args),
        args.seed,
        args.out,
        args.mode,
        task_path=args.task,
        image_encoder_path=args.image_encoder,
        text_encoder_path=args.text_encoder,
        **_flag_kwargs(args),
    )
    return 0


def _dispatch_run(args) -> int:
    harness.cmd_run(_config_of(args), args.seed, args.out, **_flag_kwargs(args))
    return 0


def _dispatch_ablation(args) -> int:
    harness.cmd_ablation(_config_of(args), args.seed, args.out, **_flag_kwargs(args))
    return 0


def _dispatch_lambda_sweep(args) -> int:
    lambdas = None
    if args.lambdas is not None:
        try:
            lambdas = tuple(float(part) for part in args.lambdas.split(","))
        except ValueError as err:
            raise ConfigError(f"bad --lambdas value: {args.lambdas!r}") from err
    harness.cmd_lambda_sweep(
        _config_of(args), args.seed, args.out, lambdas=lambdas, **_flag_kwargs(args)
    )
    return 0


def _dispatch_baselines(args) -> int:
    harness.cmd_baselines(_config_of(args), args.seed, args.out, **_flag_kwargs(args))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, FormatVersionError, CorruptFileError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except PestError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
