"""Compare stgf, stgnn_only, kalman_cv and aom on synthetic driving (or pedestrian) scenes.

    python3 scripts/compare_methods.py --kind cad --out results.csv
"""

import argparse
import logging

import numpy as np

from stgf.evaluation import METHODS, EvalOptions, evaluate, write_csv
from stgf.sim_data import ScenarioConfig, generate
from stgf.stgnn import TrainConfig, calibrate_process_noise, train

log = logging.getLogger("compare")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kind", choices=("cad", "mpl"), default="cad")
    ap.add_argument("--instances", type=int, default=200)
    ap.add_argument("--noise-sigma", type=float, default=0.5)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=21)
    ap.add_argument("--q", type=float, help="process noise; calibrated on the training set if omitted")
    ap.add_argument("--out", default="compare.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    tr = generate(ScenarioConfig.default(args.kind, seed=args.seed, noise_sigma=args.noise_sigma), args.instances)
    te = generate(ScenarioConfig.default(args.kind, seed=args.seed + 1, noise_sigma=args.noise_sigma), args.instances)
    params = train(tr, TrainConfig(epochs=args.epochs, seed=args.seed)).params
    q = args.q if args.q is not None else calibrate_process_noise(params, tr)
    log.info("process noise q = %.4g", q)

    n = te[0].n_views
    rows = [evaluate(te, params, m, n, opts=EvalOptions(q=q)) for m in METHODS]
    write_csv(rows, args.out)
    best = rows[0]
    for r in rows:
        gap = (r.de_mean - best.de_mean) / np.hypot(r.de_stderr, best.de_stderr) if r is not best else 0.0
        print(f"{r.method:10s} de={r.de_mean:.4f} +- {r.de_stderr:.4f}  relde={r.relde_mean:.4f}  "
              f"gap to stgf {gap:5.1f} SE  {r.runtime_ms:.0f} ms")


if __name__ == "__main__":
    main()
