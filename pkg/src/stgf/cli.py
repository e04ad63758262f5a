"""Command-line interface: generate, train, eval, sweep-views, check-theorems.

Exit codes: 0 success, 1 usage error, 2 data or model error, 3 failed theorem check.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import sim_data
from .evaluation import METHODS, EvalOptions, evaluate, plot_sweep, sweep_views, write_csv
from .fusion import WRITEBACK_MODES, verify_theorem1, verify_theorem2
from .stgnn.params import ModelFormatError, load_params, save_params
from .stgnn.train import TrainConfig, calibrate_process_noise, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_THEOREM = 0, 1, 2, 3
DATA_ERRORS = (OSError, ValueError, ModelFormatError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_eval_options(p):
    p.add_argument("--q", type=float, default=2000.0, help="isotropic process noise variance for stgf (m^2)")
    p.add_argument("--warmup", type=int, default=2, help="leading frames excluded from metrics")
    p.add_argument("--writeback", choices=WRITEBACK_MODES, default="fused")
    p.add_argument("--collapse", choices=("none", "mean"), default="none",
                   help="score one averaged estimate per object instead of per-view estimates")
    p.add_argument("--relde-origin", action="store_true", help="Rel-DE relative to the scene origin")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stgf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--kind", choices=("cad", "mpl"), required=True)
    g.add_argument("--instances", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--objects", type=int)
    g.add_argument("--views", type=int)
    g.add_argument("--frames", type=int)
    g.add_argument("--dt", type=float)
    g.add_argument("--noise-sigma", type=float, help="measurement noise std for every view (m)")
    g.add_argument("--bias-sigma", type=float, help="per-view constant bias std (m)")
    g.add_argument("--interaction", type=float, help="interaction strength (0 disables coupling)")
    g.add_argument("--misreport-r", type=float)
    g.add_argument("--drop-prob", type=float)

    t = sub.add_parser("train", help="train the graph network")
    t.add_argument("--data", required=True)
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--model-out", required=True)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--optimizer", choices=("adam", "sgd", "momentum"), default="adam")
    t.add_argument("--max-views", type=int)

    e = sub.add_parser("eval", help="evaluate one method")
    e.add_argument("--data", required=True)
    e.add_argument("--method", choices=METHODS, required=True)
    e.add_argument("--views", type=int, required=True)
    e.add_argument("--model")
    e.add_argument("--out", required=True)
    _add_eval_options(e)

    s = sub.add_parser("sweep-views", help="evaluate over a range of view counts")
    s.add_argument("--data", required=True)
    s.add_argument("--model")
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--min", type=int, required=True)
    s.add_argument("--max", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--plot", help="write an SVG line chart here")
    _add_eval_options(s)

    c = sub.add_parser("check-theorems", help="check single-view equivalence with the Kalman update")
    c.add_argument("--trials", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)
    return parser


def _options(args) -> EvalOptions:
    return EvalOptions(
        warmup_frames=args.warmup,
        q=args.q,
        writeback=args.writeback,
        collapse=args.collapse == "mean",
        relde_origin=args.relde_origin,
    )


def _load_model(args):
    if args.method in ("stgf", "stgnn_only"):
        if not args.model:
            raise UsageError(f"--method {args.method} requires --model")
        return load_params(args.model)
    return None


def _cmd_generate(args) -> int:
    overrides = {
        "n_objects": args.objects,
        "n_views": args.views,
        "n_frames": args.frames,
        "dt": args.dt,
        "noise_sigma": args.noise_sigma,
        "view_bias_sigma": args.bias_sigma,
        "interaction_strength": args.interaction,
        "misreport_r": args.misreport_r,
        "drop_prob": args.drop_prob,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    cfg = sim_data.ScenarioConfig.default(args.kind, seed=args.seed, **overrides)
    instances = sim_data.generate(cfg, args.instances)
    sim_data.write_dataset(instances, args.out, cfg)
    retries = sum(i.retries for i in instances)
    print(f"wrote {len(instances)} {args.kind} instances to {args.out} (retries: {retries})")
    return EXIT_OK


def _cmd_train(args) -> int:
    data = sim_data.read_dataset(args.data)
    cfg = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        seed=args.seed,
        batch_size=args.batch_size,
        optimizer=args.optimizer,
        max_views=args.max_views,
    )
    result = train(data, cfg)
    save_params(result.params, args.model_out)
    if result.loss_curve:
        print(f"final loss {result.loss_curve[-1]:.6g} after {cfg.epochs} epochs")
    print(f"calibrated q {calibrate_process_noise(result.params, data, args.max_views):.6g}")
    print(f"wrote model to {args.model_out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    model = _load_model(args)
    data = sim_data.read_dataset(args.data)
    opts = _options(args)
    row = evaluate(data, model, args.method, args.views, opts.warmup_frames, opts)
    write_csv([row], args.out)
    print(f"{row.method} views={row.views_used} de_mean={row.de_mean:.6g} relde_mean={row.relde_mean:.6g}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    model = _load_model(args)
    data = sim_data.read_dataset(args.data)
    rows = sweep_views(data, model, args.method, args.min, args.max, _options(args))
    write_csv(rows, args.out)
    if args.plot:
        plot_sweep(rows, args.plot)
    for row in rows:
        print(f"{row.method} views={row.views_used} de_mean={row.de_mean:.6g}")
    return EXIT_OK


def _cmd_check(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    r1 = verify_theorem1(args.trials, args.seed)
    r2 = verify_theorem2(args.trials, args.seed)
    print(f"measurement gain vs Kalman gain: max deviation {r1.max_deviation:.3e} over {r1.trials} trials")
    print(f"fused covariance vs Kalman posterior: max deviation {r2.max_deviation:.3e} over {r2.trials} trials")
    return EXIT_OK if r1.passed and r2.passed else EXIT_THEOREM


COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep-views": _cmd_sweep,
    "check-theorems": _cmd_check,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
