"""Score a checkpoint at several sampling times to locate the best generation time.

    python scripts/time_sweep.py CHECKPOINT --config scripts/configs/toy.json
"""
import argparse

import numpy as np

from chaosgen import checkpoint, config, metrics


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("checkpoint")
    ap.add_argument("--config", required=True, help="run config whose test data is used")
    ap.add_argument("--times", type=float, nargs="+", default=[10, 30, 100, 300, 1000, 10000])
    ap.add_argument("--n-eval", type=int, default=None)
    args = ap.parse_args()

    ck = checkpoint.load(args.checkpoint)
    cfg = config.load_config(args.config)
    _, test = config.load_data(cfg)
    n_eval = args.n_eval or cfg.train.n_eval
    print("t_star,E2,Es,ER,EAAI")
    rows = []
    for t in args.times:
        r = metrics.evaluate(ck.params, test.samples, ck.sim, t, n_eval, ck.seed, ck.epoch)
        rows.append(r.e2)
        er = "" if r.er is None else f"{r.er:.6g}"
        print(f"{t:g},{r.e2:.6g},{r.es:.6g},{er},{r.eaai:.6g}")
    print(f"# lowest E2 at t={args.times[int(np.argmin(rows))]:g}")


if __name__ == "__main__":
    main()
