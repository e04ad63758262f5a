"""Train on synthetic pedestrian scenes, then sweep stgf error over the number of views.

    python3 scripts/run_view_sweep.py --out-dir runs/sweep
"""

import argparse
import logging
from pathlib import Path

from stgf.evaluation import EvalOptions, plot_sweep, sweep_views, write_csv
from stgf.sim_data import ScenarioConfig, generate, write_dataset
from stgf.stgnn import TrainConfig, calibrate_process_noise, save_params, train

log = logging.getLogger("view_sweep")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="runs/sweep")
    ap.add_argument("--instances", type=int, default=200)
    ap.add_argument("--views", type=int, default=4)
    ap.add_argument("--noise-sigma", type=float, default=0.3)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--seed", type=int, default=31)
    ap.add_argument("--q", type=float, help="process noise; calibrated on the training set if omitted")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kw = dict(noise_sigma=args.noise_sigma, n_views=args.views)
    tr_cfg = ScenarioConfig.default("mpl", seed=args.seed, **kw)
    te_cfg = ScenarioConfig.default("mpl", seed=args.seed + 1, **kw)
    tr, te = generate(tr_cfg, args.instances), generate(te_cfg, args.instances)
    write_dataset(te, out / "test.jsonl", te_cfg)

    log.info("training %d epochs on %d instances", args.epochs, len(tr))
    res = train(tr, TrainConfig(epochs=args.epochs, seed=args.seed, batch_size=64))
    save_params(res.params, out / "model.json")
    q = args.q if args.q is not None else calibrate_process_noise(res.params, tr)
    log.info("final loss %.4g, q %.4g", res.loss_curve[-1] if res.loss_curve else float("nan"), q)

    opts = EvalOptions(q=q)
    rows = []
    for method in ("stgf", "aom"):
        rows += sweep_views(te, res.params, method, 1, args.views, opts)
    write_csv(rows, out / "sweep.csv")
    plot_sweep([r for r in rows if r.method == "stgf"], out / "sweep_stgf.svg")
    for r in rows:
        print(f"{r.method:10s} views={r.views_used} de={r.de_mean:.4f} +- {r.de_stderr:.4f}")


if __name__ == "__main__":
    main()
