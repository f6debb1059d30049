"""Separation growth of untrained unrestricted networks as a function of gain and size.

Prints, per (N, g, seed), the largest separation reached within the probe
window divided by the initial one, and the separation at the end.

    python scripts/chaos_curve.py --sizes 200 1000 --gains 0.25 1.5 2.25 4 9
"""
import argparse

from chaosgen import dynamics as dy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[200])
    ap.add_argument("--gains", type=float, nargs="+", default=[0.25, 1.0, 1.5, 2.25, 4.0, 9.0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--dt", type=float, default=0.1)
    ap.add_argument("--tau", type=float, default=10.0)
    ap.add_argument("--t-probe", type=float, default=2000.0)
    ap.add_argument("--delta0", type=float, default=1e-6)
    args = ap.parse_args()

    sim = dy.SimConfig(args.dt, args.tau, 0.0)
    print("N,g,seed,max_growth,final_separation")
    for n in args.sizes:
        for g in args.gains:
            for seed in range(args.seeds):
                curve = dy.chaos_probe(dy.init_unrestricted(n, g, seed), sim, args.delta0, args.t_probe, seed,
                                       record_every=10)
                print(f"{n},{g:g},{seed},{curve[:, 1].max() / curve[0, 1]:.4g},{curve[-1, 1]:.4g}", flush=True)


if __name__ == "__main__":
    main()
