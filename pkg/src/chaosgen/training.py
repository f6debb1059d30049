"""Contrastive Hebbian training.

Each epoch draws a minibatch of ``M`` data rows (positive phase, visibles
clamped to data) and runs ``M`` free chains to time ``T`` (negative phase).
Every trainable tensor then moves by ``k * (positive - negative)`` where the
two terms are matching first or second moments.

Statistics are keyed by trainable name: ``b``, ``c``, ``d`` are first moments
of the visible / hidden / second hidden layer, ``A`` (``A1``, ``A2``) are
mean outer products of the two layers the coupling connects.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import dataio
from . import rng as rngmod
from .dynamics import (
    DeepParams,
    RestrictedParams,
    SimConfig,
    UnrestrictedParams,
    clamped_hidden_closed_form,
    simulate_clamped,
    simulate_free,
)
from .errors import InvalidArgument


@dataclass(frozen=True)
class TrainConfig:
    k: float = 0.01
    m_batch: int = 500
    epochs: int = 300_000
    sim: SimConfig = field(default_factory=SimConfig)
    eval_every: int = 0
    checkpoint_every: int = 0
    seed: int = 0
    n_eval: int = 500
    workers: int = 1

    def __post_init__(self):
        if not self.k > 0:
            raise InvalidArgument("learning rate k must be positive")
        if self.m_batch < 1:
            raise InvalidArgument("m_batch must be at least 1")
        if self.epochs < 0 or self.eval_every < 0 or self.checkpoint_every < 0:
            raise InvalidArgument("epoch counts must be non-negative")
        if self.seed < 0:
            raise InvalidArgument("seed must be non-negative")


@dataclass
class PhaseStatistics:
    first_moments: dict
    second_moments: dict

    def as_dict(self):
        return {**self.first_moments, **self.second_moments}


def _layer_moments(params, layers):
    """Moment set for a list of per-layer activation matrices (rows = samples)."""
    n = layers[0].shape[0]
    if isinstance(params, UnrestrictedParams):
        x = layers[0]
        s = x.T @ x / n
        # exact symmetry regardless of how the product was evaluated
        s = (s + s.T) / 2
        return PhaseStatistics({"b": x.mean(axis=0)}, {"A": s})
    firsts = dict(zip(("b", "c", "d"), (x.mean(axis=0) for x in layers)))
    names = ("A",) if isinstance(params, RestrictedParams) else ("A1", "A2")
    seconds = {name: layers[l].T @ layers[l + 1] / n for l, name in enumerate(names)}
    return PhaseStatistics(firsts, seconds)


def positive_statistics(params, minibatch, cfg: SimConfig, seed=0, epoch=0, hidden0=None, workers=1):
    """Data-clamped moments.

    The restricted model uses the closed-form hidden response; the deep model
    integrates its two hidden layers. Hidden initial conditions are standard
    normal, keyed by (seed, epoch, row), unless ``hidden0`` is supplied
    (one array per hidden layer).
    """
    xi = np.atleast_2d(np.asarray(minibatch, dtype=np.float64))
    if xi.shape[0] == 0:
        raise InvalidArgument("empty minibatch")
    if xi.shape[1] != params.n_v:
        raise InvalidArgument(f"minibatch width {xi.shape[1]} does not match n_v={params.n_v}")
    if np.any(np.abs(xi) > 1):
        raise InvalidArgument("minibatch entries must lie in [-1, 1]")
    key = (rngmod.CLAMP, epoch)
    if isinstance(params, UnrestrictedParams):
        layers = [xi]
    elif isinstance(params, RestrictedParams):
        if hidden0 is None:
            (h0,) = rngmod.normal_rows(seed, key, range(xi.shape[0]), (params.n_h,))
        else:
            h0 = np.asarray(hidden0[0], dtype=np.float64)
        layers = [xi, clamped_hidden_closed_form(params, xi, h0, cfg)]
    else:
        layers = [xi, *simulate_clamped(params, xi, cfg, seed, key, hidden0, workers=workers)]
    return _layer_moments(params, layers)


def negative_statistics(params, cfg: SimConfig, m_chains, seed=0, epoch=0, workers=1):
    """Moments of ``m_chains`` free runs harvested at time T."""
    samples = simulate_free(params, cfg, m_chains, seed, (rngmod.FREE, epoch), workers=workers)
    return _layer_moments(params, list(samples.layers))


def apply_update(params, pos: PhaseStatistics, neg: PhaseStatistics, k):
    """Return new parameters with every trainable moved by ``k * (pos - neg)``."""
    pos_d, neg_d = pos.as_dict(), neg.as_dict()
    names = set(params.trainable_names)
    if set(pos_d) != names or set(neg_d) != names:
        raise InvalidArgument(
            f"statistics keys {sorted(pos_d)} / {sorted(neg_d)} do not match trainables {sorted(names)}")
    updates = {}
    for name in params.trainable_names:
        cur = getattr(params, name)
        p, n = np.asarray(pos_d[name], dtype=np.float64), np.asarray(neg_d[name], dtype=np.float64)
        if p.shape != cur.shape or n.shape != cur.shape:
            raise InvalidArgument(f"statistic {name!r} has shape {p.shape}/{n.shape}, expected {cur.shape}")
        delta = p - n
        if isinstance(params, UnrestrictedParams) and name == "A":
            delta = (delta + delta.T) / 2
        updates[name] = cur + k * delta
    return params.with_trainables(**updates)


def train_epoch(params, dataset, cfg: TrainConfig, epoch_index):
    """One update: fresh minibatch, both phases, one parameter step."""
    batch = dataio.minibatch(dataset, cfg.m_batch, cfg.seed, epoch_index)
    pos = positive_statistics(params, batch, cfg.sim, cfg.seed, epoch_index, workers=cfg.workers)
    neg = negative_statistics(params, cfg.sim, cfg.m_batch, cfg.seed, epoch_index, workers=cfg.workers)
    return apply_update(params, pos, neg, cfg.k)


@dataclass
class TrainHooks:
    """Synchronous callbacks fired from the epoch loop.

    ``evaluate(epoch, params)`` runs when ``epoch`` is a multiple of
    ``eval_every`` and at the final epoch; its return value is collected
    into the metric log. ``checkpoint(epoch, params)`` runs likewise for
    ``checkpoint_every``. ``epoch`` counts updates already applied.
    """

    evaluate: Optional[Callable] = None
    checkpoint: Optional[Callable] = None


def _due(epoch, every, final):
    return epoch == final or (every > 0 and epoch % every == 0)


def train(params, dataset, cfg: TrainConfig, hooks: TrainHooks = None, start_epoch=0, stop_epoch=None):
    """Run epochs ``start_epoch .. cfg.epochs`` (or up to ``stop_epoch``).

    Returns ``(params, log)`` where ``log`` is a list of ``(epoch, report,
    wall_seconds)`` tuples from the evaluate hook.
    """
    hooks = hooks or TrainHooks()
    final = cfg.epochs if stop_epoch is None else min(stop_epoch, cfg.epochs)
    if cfg.m_batch > dataset.n_samples:
        raise InvalidArgument(f"m_batch={cfg.m_batch} exceeds dataset size {dataset.n_samples}")
    log = []
    t0 = time.perf_counter()
    epoch = start_epoch
    while True:
        if hooks.evaluate is not None and _due(epoch, cfg.eval_every, final):
            log.append((epoch, hooks.evaluate(epoch, params), time.perf_counter() - t0))
        if hooks.checkpoint is not None and epoch != start_epoch and _due(epoch, cfg.checkpoint_every, final):
            hooks.checkpoint(epoch, params)
        if epoch >= final:
            break
        params = train_epoch(params, dataset, cfg, epoch)
        epoch += 1
    return params, log
