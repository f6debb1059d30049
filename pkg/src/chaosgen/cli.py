"""Command-line entry point.

Exit status: 0 on success, 2 on invalid input (configuration, arguments,
corrupt files), 1 on runtime failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint as ckptmod
from . import config as configmod
from . import dataio, metrics
from . import rng as rngmod
from .dynamics import SimConfig, chaos_probe, init_params, simulate_free
from .errors import ConfigError, FormatError, InvalidArgument
from .training import TrainHooks, train

GRID_SAMPLES = 16


def _image_shape(n_v):
    side = math.isqrt(n_v)
    return (side, side) if side * side == n_v else (1, n_v)


def _ckpt_name(epoch):
    return f"ckpt_{epoch:08d}.cgen"


def _rewrite_log(path, keep_before):
    """Drop metric rows at or after ``keep_before`` so a resumed run re-emits them."""
    lines = path.read_text().splitlines() if path.exists() else []
    kept = [metrics.MetricReport.CSV_HEADER]
    for line in lines[1:]:
        if line and int(line.split(",", 1)[0]) < keep_before:
            kept.append(line)
    path.write_text("\n".join(kept) + "\n")


def cmd_train(args):
    cfg = configmod.load_config(args.config)
    resume = None
    if args.resume:
        resume = ckptmod.load(args.resume)
        problems = []
        if resume.architecture != cfg.architecture:
            problems.append(f"checkpoint architecture {resume.architecture} != config {cfg.architecture}")
        if resume.dims != cfg.dimensions:
            problems.append(f"checkpoint dimensions {resume.dims} != config {cfg.dimensions}")
        if resume.params.g != cfg.g:
            problems.append(f"checkpoint g={resume.params.g} != config g={cfg.g}")
        if resume.seed != cfg.seed:
            problems.append(f"checkpoint seed {resume.seed} != config seed {cfg.seed}")
        if resume.sim != cfg.sim:
            problems.append(f"checkpoint sim {resume.sim} != config sim {cfg.sim}")
        if resume.epoch > cfg.train.epochs:
            problems.append(f"checkpoint epoch {resume.epoch} is past the configured {cfg.train.epochs} epochs")
        if problems:
            raise ConfigError(problems)

    train_set, test_set = configmod.load_data(cfg)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "metrics.csv"
    image_shape = train_set.image_shape or _image_shape(cfg.dimensions["n_v"])
    tcfg = cfg.train

    def save(epoch, params):
        ckpt = ckptmod.Checkpoint(params, cfg.sim, epoch, cfg.seed)
        ckptmod.save(out / _ckpt_name(epoch), ckpt)
        grid = simulate_free(params, cfg.sim, GRID_SAMPLES, cfg.seed, (rngmod.GRID, epoch), workers=tcfg.workers)
        dataio.export_image_grid(grid.samples, image_shape, 4, out / f"samples_{epoch:08d}.pgm")
        if epoch == tcfg.epochs:
            ckptmod.save(out / "final.cgen", ckpt)

    if resume is None:
        params = init_params(cfg.architecture, cfg.dimensions, cfg.g, cfg.seed)
        start = 0
        (out / "final.cgen").unlink(missing_ok=True)
        _rewrite_log(log_path, 0)
        save(0, params)
    else:
        params, start = resume.params, resume.epoch
        _rewrite_log(log_path, start)

    t0 = time.perf_counter()

    def evaluate(epoch, params):
        report = metrics.evaluate(params, test_set.samples, cfg.sim, cfg.sim.t_target, tcfg.n_eval,
                                  cfg.seed, epoch, tcfg.workers)
        with open(log_path, "a") as f:
            f.write(report.csv_row(epoch, time.perf_counter() - t0) + "\n")
        if not args.quiet:
            er = "NA" if report.er is None else format(report.er, ".6g")
            print(f"epoch {epoch}: E2={report.e2:.6g} Es={report.es:.6g} ER={er} EAAI={report.eaai:.6g}",
                  flush=True)
        return report

    hooks = TrainHooks(evaluate=evaluate, checkpoint=save)
    try:
        params, _ = train(params, train_set, tcfg, hooks, start_epoch=start, stop_epoch=args.stop_at)
    except OSError as exc:
        raise RuntimeError(f"I/O failure during training (resume from the last checkpoint in {out}): {exc}")
    return 0


def _load_ckpt(args):
    return ckptmod.load(args.checkpoint)


def _eval_data(args, n_v):
    if args.data:
        ds = dataio.load_idx(args.data)
    elif args.config:
        cfg = configmod.load_config(args.config)
        _, ds = configmod.load_data(cfg)
    else:
        raise InvalidArgument("provide --data (IDX images) or --config (uses its test data)")
    if ds.n_v != n_v:
        raise InvalidArgument(f"data has {ds.n_v} values per sample, checkpoint expects n_v={n_v}")
    return ds


def cmd_generate(args):
    ck = _load_ckpt(args)
    t_star = ck.sim.t_target if args.t_star is None else args.t_star[0]
    ck.sim.steps_for(t_star)
    seed = ck.seed if args.seed is None else args.seed
    samples = metrics.generate(ck.params, ck.sim, args.n_samples, t_star, seed, ck.epoch, args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    shape = _image_shape(ck.params.n_v)
    cols = max(1, math.ceil(math.sqrt(args.n_samples)))
    dataio.export_image_grid(samples, shape, cols, out.with_suffix(".pgm"))
    dataio.write_matrix(out.with_suffix(".mat"), samples)
    print(f"wrote {out.with_suffix('.pgm')} and {out.with_suffix('.mat')}")
    return 0


def cmd_evaluate(args):
    ck = _load_ckpt(args)
    seed = ck.seed if args.seed is None else args.seed
    ds = _eval_data(args, ck.params.n_v)
    n_eval = args.n_samples or min(ds.n_samples, 10_000)
    t_values = args.t_star or [ck.sim.t_target]
    log = Path(args.log) if args.log else Path(args.checkpoint).with_name("evaluate.csv")
    new_log = not log.exists()
    with open(log, "a") as f:
        if new_log:
            f.write(metrics.MetricReport.CSV_HEADER.replace("epoch", "epoch,t_star") + "\n")
        for t_star in t_values:
            ck.sim.steps_for(t_star)
            gen = ds.samples[:n_eval] if args.sanity else None
            if gen is None and args.samples_out:
                gen = metrics.generate(ck.params, ck.sim, n_eval, t_star, seed, ck.epoch, args.workers)
                path = Path(args.samples_out)
                if len(t_values) > 1:
                    path = path.with_name(f"{path.stem}_t{t_star:g}{path.suffix}")
                dataio.write_matrix(path, gen)
            report = metrics.evaluate(ck.params, ds.samples, ck.sim, t_star, n_eval, seed, ck.epoch,
                                      args.workers, gen=gen)
            print(report.as_text())
            print()
            f.write(f"{ck.epoch},{t_star!r}," + report.csv_row(ck.epoch, 0.0).split(",", 1)[1] + "\n")
    return 0


def cmd_reconstruct(args):
    ck = _load_ckpt(args)
    ds = _eval_data(args, ck.params.n_v)
    n = min(args.n_samples or 16, ds.n_samples)
    t_star = ck.sim.t_target if args.t_star is None else args.t_star[0]
    ck.sim.steps_for(t_star)
    seed = ck.seed if args.seed is None else args.seed
    xi = ds.samples[:n]
    recon = metrics.reconstruct(ck.params, xi, ck.sim, t_star, seed, (rngmod.RECON, ck.epoch))
    err = float(np.mean((xi - recon) ** 2))
    pairs = np.empty((2 * n, xi.shape[1]))
    pairs[0::2], pairs[1::2] = xi, recon
    shape = ds.image_shape or _image_shape(ck.params.n_v)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dataio.export_image_grid(pairs, shape, 2, out)
    print(f"ER={err!r}")
    return 0


def cmd_receptive_fields(args):
    ck = _load_ckpt(args)
    seed = ck.seed if args.seed is None else args.seed
    n_h = getattr(ck.params, "n_h", None)
    if n_h is None:
        from .errors import UnsupportedArchitecture
        raise UnsupportedArchitecture("receptive fields are defined for the restricted architecture")
    if not 1 <= args.count <= n_h:
        raise InvalidArgument(f"--count must be in [1, {n_h}]")
    idx = np.sort(rngmod.stream(seed, rngmod.PICK).choice(n_h, size=args.count, replace=False))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dataio.export_receptive_fields(ck.params, idx, out, _image_shape(ck.params.n_v))
    print("hidden units: " + " ".join(str(i) for i in idx))
    return 0


def cmd_chaos_probe(args):
    if args.checkpoint:
        ck = _load_ckpt(args)
        params, sim, seed = ck.params, ck.sim, ck.seed
    elif args.config:
        cfg = configmod.load_config(args.config)
        params = init_params(cfg.architecture, cfg.dimensions, cfg.g, cfg.seed)
        sim, seed = cfg.sim, cfg.seed
    else:
        raise InvalidArgument("provide --config or --checkpoint")
    if args.dt is not None:
        sim = SimConfig(args.dt, sim.tau, 0.0)
    seed = seed if args.seed is None else args.seed
    t_probe = args.t_probe if args.t_probe is not None else 100 * sim.tau
    curve = chaos_probe(params, sim, args.delta0, t_probe, seed, args.record_every)
    print("t,separation")
    for t, s in curve:
        print(f"{float(t)!r},{float(s)!r}")
    return 0


def cmd_schema(args):
    print(json.dumps(configmod.CONFIG_SCHEMA, indent=2))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="chaosgen", description="Generative modelling with chaotic rate networks.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, config=False, checkpoint=False, data=False):
        if config:
            sp.add_argument("--config", help="JSON run configuration")
        if checkpoint:
            sp.add_argument("--checkpoint", required=not config, help="CGEN checkpoint file")
        if data:
            sp.add_argument("--data", help="IDX image file (alternative to --config test data)")
        sp.add_argument("--seed", type=int, default=None, help="override the master seed")
        sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("train", help="train a model from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--resume", help="checkpoint to continue from")
    sp.add_argument("--stop-at", type=int, default=None, help="stop after this many epochs, leaving a checkpoint")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("generate", help="sample from a checkpoint")
    common(sp, checkpoint=True)
    sp.add_argument("--n-samples", type=int, default=16)
    sp.add_argument("--t-star", type=float, nargs=1)
    sp.add_argument("--out", required=True, help="output path stem; writes .pgm and .mat")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("evaluate", help="compute the accuracy indices")
    common(sp, config=True, checkpoint=True, data=True)
    sp.add_argument("--n-samples", type=int, default=None, help="evaluation set size (default min(N, 10000))")
    sp.add_argument("--t-star", type=float, nargs="+", help="one or more evaluation times")
    sp.add_argument("--log", help="CSV file to append results to")
    sp.add_argument("--samples-out", help="write the generated samples as a raw matrix")
    sp.add_argument("--sanity", action="store_true", help="score the data against itself")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("reconstruct", help="reconstruction error and image pairs (restricted only)")
    common(sp, config=True, checkpoint=True, data=True)
    sp.add_argument("--n-samples", type=int, default=16)
    sp.add_argument("--t-star", type=float, nargs=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("receptive-fields", help="export hidden-unit receptive fields (restricted only)")
    common(sp, checkpoint=True)
    sp.add_argument("--count", type=int, default=9)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_receptive_fields)

    sp = sub.add_parser("chaos-probe", help="print the divergence of two nearby trajectories")
    sp.add_argument("--config")
    sp.add_argument("--checkpoint")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--delta0", type=float, default=1e-6)
    sp.add_argument("--t-probe", type=float, default=None, help="probe duration (default 100 tau)")
    sp.add_argument("--dt", type=float, default=None, help="override the integration step")
    sp.add_argument("--record-every", type=int, default=1)
    sp.set_defaults(func=cmd_chaos_probe)

    sp = sub.add_parser("schema", help="print the JSON schema of run configurations")
    sp.set_defaults(func=cmd_schema)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidArgument, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
