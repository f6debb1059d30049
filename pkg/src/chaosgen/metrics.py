"""Sample-quality indices: second moment, spectrum, reconstruction and AAI errors."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng as rngmod
from .dynamics import (
    RestrictedParams,
    SimConfig,
    clamped_hidden_preactivation,
    clamped_visible_closed_form,
    phi,
    simulate_free,
)
from .errors import InvalidArgument, UnsupportedArchitecture


@dataclass
class MetricReport:
    e2: float
    es: float
    er: Optional[float]
    eaai: float
    t_star: float
    n_samples: int

    CSV_HEADER = "epoch,E2,Es,ER,EAAI,wall_seconds"

    def csv_row(self, epoch, wall_seconds):
        er = "" if self.er is None else repr(self.er)
        return f"{epoch},{self.e2!r},{self.es!r},{er},{self.eaai!r},{wall_seconds:.3f}"

    def as_text(self):
        er = "NA" if self.er is None else repr(self.er)
        return "\n".join([
            f"t_star={self.t_star!r}",
            f"n_samples={self.n_samples}",
            f"E2={self.e2!r}",
            f"Es={self.es!r}",
            f"ER={er}",
            f"EAAI={self.eaai!r}",
        ])


def _matrix(x, name):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidArgument(f"{name} must be a 2-d sample matrix")
    return x


def covariance_matrix(samples):
    """Population covariance of the columns of an ``(n, N_v)`` matrix."""
    x = _matrix(samples, "samples")
    n = x.shape[0]
    if n < 2:
        raise InvalidArgument("covariance needs at least two samples")
    mean = x.mean(axis=0)
    c = x.T @ x / n - np.outer(mean, mean)
    return (c + c.T) / 2


def error_second_moment(gen, data):
    """Off-diagonal covariance MSE: sum over i<j of squared differences / (N_v (N_v - 1))."""
    gen, data = _matrix(gen, "gen"), _matrix(data, "data")
    if gen.shape[1] != data.shape[1]:
        raise InvalidArgument(f"dimension mismatch: {gen.shape[1]} vs {data.shape[1]}")
    n_v = gen.shape[1]
    if n_v < 2:
        raise InvalidArgument("second-moment error needs N_v >= 2")
    diff = covariance_matrix(gen) - covariance_matrix(data)
    iu = np.triu_indices(n_v, k=1)
    return float(np.sum(diff[iu] ** 2) / (n_v * (n_v - 1)))


def singular_values(samples):
    """Singular values in descending order, ``min(n, N_v)`` of them."""
    x = _matrix(samples, "samples")
    if x.size == 0:
        raise InvalidArgument("empty matrix")
    return np.linalg.svd(x, compute_uv=False)


def error_spectrum(gen, data):
    """Squared difference of the two ordered spectra, summed and divided by n."""
    gen, data = _matrix(gen, "gen"), _matrix(data, "data")
    if gen.shape != data.shape:
        raise InvalidArgument(f"shape mismatch: {gen.shape} vs {data.shape}")
    diff = singular_values(gen) - singular_values(data)
    return float(np.sum(diff ** 2) / gen.shape[0])


def reconstruct(params, data, cfg: SimConfig, t_star, seed=0, key=(rngmod.RECON, 0), v0=None, h0=None):
    """Clamp visibles to data and read the hidden state at ``t_star``, then clamp
    hiddens to that state and return the visible activations at ``t_star``.

    Initial pre-activations are standard normal (row ``r`` from
    ``stream(seed, *key, r)``) unless given.
    """
    if not isinstance(params, RestrictedParams):
        raise UnsupportedArchitecture("reconstruction is defined for the restricted architecture only")
    xi = _matrix(data, "data")
    if v0 is None or h0 is None:
        v_init, h_init = rngmod.normal_rows(seed, key, range(xi.shape[0]), (params.n_v, params.n_h))
        v0 = v_init if v0 is None else v0
        h0 = h_init if h0 is None else h0
    h_t = clamped_hidden_preactivation(params, xi, h0, cfg, t_star)
    return clamped_visible_closed_form(params, phi(h_t), v0, cfg, t_star)


def error_reconstruction(params, data, cfg: SimConfig, t_star, seed=0, key=(rngmod.RECON, 0), v0=None, h0=None):
    """Mean squared difference between data and its reconstruction."""
    xi = _matrix(data, "data")
    recon = reconstruct(params, xi, cfg, t_star, seed, key, v0, h0)
    return float(np.mean((xi - recon) ** 2))


def nearest_neighbors(points, block=256):
    """Index of each row's nearest other row (squared Euclidean distance).

    Candidates are screened with the Gram expansion and the closest ones are
    rescored with exact differences, so ties are resolved on exact distances
    in favour of the lowest index. A row never counts as its own neighbour.
    """
    x = _matrix(points, "points")
    n = x.shape[0]
    if n < 2:
        raise InvalidArgument("nearest neighbours need at least two points")
    sq = np.sum(x * x, axis=1)
    out = np.empty(n, dtype=np.int64)
    for start in range(0, n, block):
        rows = np.arange(start, min(start + block, n))
        approx = sq[rows, None] + sq[None, :] - 2.0 * (x[rows] @ x.T)
        approx[np.arange(rows.size), rows] = np.inf
        best = approx.min(axis=1)
        slack = 1e-9 * (sq[rows] + sq.max()) + 1e-12
        for r, row in enumerate(rows):
            cand = np.flatnonzero(approx[r] <= best[r] + slack[r])
            d = np.sum((x[cand] - x[row]) ** 2, axis=1)
            out[row] = cand[np.flatnonzero(d == d.min())[0]]
    return out


def aai_probabilities(gen, data):
    gen, data = _matrix(gen, "gen"), _matrix(data, "data")
    n = gen.shape[0]
    if n < 2 or data.shape[0] != n:
        raise InvalidArgument("AAI needs equal-sized sets of at least two samples")
    if gen.shape[1] != data.shape[1]:
        raise InvalidArgument(f"dimension mismatch: {gen.shape[1]} vs {data.shape[1]}")
    nn = nearest_neighbors(np.vstack([gen, data]))
    p_gg = float(np.mean(nn[:n] < n))
    p_dd = float(np.mean(nn[n:] >= n))
    return p_gg, p_dd


def error_aai(gen, data):
    """Adversarial accuracy error; 0 when the two sets are perfectly mixed."""
    p_gg, p_dd = aai_probabilities(gen, data)
    return 0.5 * ((p_gg - 0.5) ** 2 + (p_dd - 0.5) ** 2)


def compare(gen, data, t_star):
    """All sample-only indices (no reconstruction) of ``gen`` against ``data``."""
    return MetricReport(
        e2=error_second_moment(gen, data),
        es=error_spectrum(gen, data),
        er=None,
        eaai=error_aai(gen, data),
        t_star=float(t_star),
        n_samples=int(np.shape(gen)[0]),
    )


def generate(params, cfg: SimConfig, n, t_star, seed, epoch=0, workers=1):
    """Evaluation samples: ``n`` free runs to ``t_star`` on the evaluation stream."""
    return simulate_free(params, cfg, n, seed, (rngmod.EVAL, epoch), t_target=t_star, workers=workers).samples


def evaluate(params, data, cfg: SimConfig, t_star, n_eval, seed=0, epoch=0, workers=1, gen=None):
    """Score ``n_eval`` free-run samples at ``t_star`` against the first ``n_eval`` data rows.

    Random draws are keyed by ``(seed, epoch)``, so the report for a given
    checkpoint is reproducible. Passing ``gen`` skips generation.
    """
    data = _matrix(data, "data")
    if not 2 <= n_eval <= data.shape[0]:
        raise InvalidArgument(f"n_eval={n_eval} must be in [2, {data.shape[0]}]")
    held_out = data[:n_eval]
    if gen is None:
        gen = generate(params, cfg, n_eval, t_star, seed, epoch, workers)
    report = compare(gen, held_out, t_star)
    if isinstance(params, RestrictedParams):
        report.er = error_reconstruction(params, held_out, cfg, t_star, seed, (rngmod.RECON, epoch))
    return report
