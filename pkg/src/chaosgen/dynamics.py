"""Chaotic rate networks: parameters, Euler integration and closed forms.

Three architectures share one integration scheme:

* ``UnrestrictedParams``: a single recurrent layer driven by ``J + A``.
* ``RestrictedParams``: visible and hidden layers, no intra-layer couplings,
  forward coupling ``W + A`` and backward coupling ``W_tilde + A.T``.
* ``DeepParams``: visible, hidden-1 and hidden-2 layers chained the same way.

Coupling matrices are stored unscaled; the ``1/sqrt(N)`` factor of the source
layer is applied when a simulation is set up. All arrays are float64.

States are row-major: a batch of ``m`` chains is an ``(m, n)`` array per layer,
and a single chain may be passed as a 1-d vector.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from . import rng as rngmod
from .errors import InvalidArgument, UnsupportedArchitecture

CHUNK = 64
"""Chains are simulated in fixed-size blocks so results never depend on the
number of workers."""


def phi(x):
    return np.tanh(x)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1.0
    tau: float = 10.0
    t_target: float = 100.0

    def __post_init__(self):
        for name in ("dt", "tau", "t_target"):
            val = getattr(self, name)
            if not isinstance(val, (int, float)) or not math.isfinite(val):
                raise InvalidArgument(f"{name} must be a finite number, got {val!r}")
        if self.dt <= 0 or self.tau <= 0:
            raise InvalidArgument("dt and tau must be positive")
        self.steps_for(self.t_target)

    @property
    def n_steps(self):
        return self.steps_for(self.t_target)

    def steps_for(self, t):
        """Number of Euler steps to reach time ``t``; ``t`` must be a multiple of dt."""
        if t < 0:
            raise InvalidArgument(f"time must be non-negative, got {t}")
        ratio = t / self.dt
        n = round(ratio)
        if abs(ratio - n) > 1e-9 * max(1.0, abs(ratio)):
            raise InvalidArgument(f"time {t} is not a multiple of dt={self.dt}")
        return int(n)


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


class _Params:
    architecture = ""
    fixed_names: tuple = ()
    trainable_names: tuple = ()

    def __post_init__(self):
        shapes = self.expected_shapes()
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, np.ndarray):
                if val.shape != shapes[f.name]:
                    raise InvalidArgument(f"{f.name} has shape {val.shape}, expected {shapes[f.name]}")
                object.__setattr__(self, f.name, _frozen(val))

    def tensors(self):
        """Fixed then trainable tensors, in a stable order."""
        return {name: getattr(self, name) for name in self.fixed_names + self.trainable_names}

    def trainables(self):
        return {name: getattr(self, name) for name in self.trainable_names}

    def with_trainables(self, **updates):
        bad = set(updates) - set(self.trainable_names)
        if bad:
            raise InvalidArgument(f"not trainable: {sorted(bad)}")
        return replace(self, **updates)


@dataclass(frozen=True, eq=False)
class UnrestrictedParams(_Params):
    n_v: int
    g: float
    J: np.ndarray
    A: np.ndarray
    b: np.ndarray

    architecture = "unrestricted"
    fixed_names = ("J",)
    trainable_names = ("A", "b")

    @property
    def layer_sizes(self):
        return (self.n_v,)

    def expected_shapes(self):
        n = self.n_v
        return {"J": (n, n), "A": (n, n), "b": (n,)}


@dataclass(frozen=True, eq=False)
class RestrictedParams(_Params):
    n_v: int
    n_h: int
    g: float
    W: np.ndarray
    W_tilde: np.ndarray
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray

    architecture = "restricted"
    fixed_names = ("W", "W_tilde")
    trainable_names = ("A", "b", "c")

    @property
    def layer_sizes(self):
        return (self.n_v, self.n_h)

    def expected_shapes(self):
        v, h = self.n_v, self.n_h
        return {"W": (v, h), "W_tilde": (h, v), "A": (v, h), "b": (v,), "c": (h,)}

    def links(self):
        return [(self.W, self.W_tilde, self.A)]

    def layer_fields(self):
        return [self.b, self.c]


@dataclass(frozen=True, eq=False)
class DeepParams(_Params):
    n_v: int
    n_h1: int
    n_h2: int
    g: float
    W1: np.ndarray
    W1_tilde: np.ndarray
    W2: np.ndarray
    W2_tilde: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    architecture = "deep"
    fixed_names = ("W1", "W1_tilde", "W2", "W2_tilde")
    trainable_names = ("A1", "A2", "b", "c", "d")

    @property
    def layer_sizes(self):
        return (self.n_v, self.n_h1, self.n_h2)

    def expected_shapes(self):
        v, h1, h2 = self.n_v, self.n_h1, self.n_h2
        return {"W1": (v, h1), "W1_tilde": (h1, v), "W2": (h1, h2), "W2_tilde": (h2, h1),
                "A1": (v, h1), "A2": (h1, h2), "b": (v,), "c": (h1,), "d": (h2,)}

    def links(self):
        return [(self.W1, self.W1_tilde, self.A1), (self.W2, self.W2_tilde, self.A2)]

    def layer_fields(self):
        return [self.b, self.c, self.d]


ARCHITECTURES = {
    "unrestricted": UnrestrictedParams,
    "restricted": RestrictedParams,
    "deep": DeepParams,
}


def _check_dims(g, *dims):
    for n in dims:
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
            raise InvalidArgument(f"layer dimensions must be positive integers, got {n!r}")
    if not math.isfinite(g) or g < 0:
        raise InvalidArgument(f"g must be a finite non-negative number, got {g!r}")


def _gaussian(gen, g, shape):
    # entries have variance g, i.e. standard deviation sqrt(g)
    return math.sqrt(g) * gen.standard_normal(shape)


def init_unrestricted(n_v, g, seed):
    _check_dims(g, n_v)
    gen = rngmod.stream(seed, rngmod.PARAMS)
    return UnrestrictedParams(
        n_v=int(n_v), g=float(g),
        J=_gaussian(gen, g, (n_v, n_v)),
        A=np.zeros((n_v, n_v)),
        b=np.zeros(n_v),
    )


def init_restricted(n_v, n_h, g, seed):
    _check_dims(g, n_v, n_h)
    gen = rngmod.stream(seed, rngmod.PARAMS)
    W = _gaussian(gen, g, (n_v, n_h))
    W_tilde = _gaussian(gen, g, (n_h, n_v))
    return RestrictedParams(
        n_v=int(n_v), n_h=int(n_h), g=float(g), W=W, W_tilde=W_tilde,
        A=np.zeros((n_v, n_h)), b=np.zeros(n_v), c=np.zeros(n_h),
    )


def init_deep(n_v, n_h1, n_h2, g, seed):
    _check_dims(g, n_v, n_h1, n_h2)
    gen = rngmod.stream(seed, rngmod.PARAMS)
    W1 = _gaussian(gen, g, (n_v, n_h1))
    W1_tilde = _gaussian(gen, g, (n_h1, n_v))
    W2 = _gaussian(gen, g, (n_h1, n_h2))
    W2_tilde = _gaussian(gen, g, (n_h2, n_h1))
    return DeepParams(
        n_v=int(n_v), n_h1=int(n_h1), n_h2=int(n_h2), g=float(g),
        W1=W1, W1_tilde=W1_tilde, W2=W2, W2_tilde=W2_tilde,
        A1=np.zeros((n_v, n_h1)), A2=np.zeros((n_h1, n_h2)),
        b=np.zeros(n_v), c=np.zeros(n_h1), d=np.zeros(n_h2),
    )


def init_params(architecture, dims, g, seed):
    """Dispatch on architecture name; ``dims`` maps n_v/n_h/n_h1/n_h2 to sizes."""
    if architecture == "unrestricted":
        return init_unrestricted(dims["n_v"], g, seed)
    if architecture == "restricted":
        return init_restricted(dims["n_v"], dims["n_h"], g, seed)
    if architecture == "deep":
        return init_deep(dims["n_v"], dims["n_h1"], dims["n_h2"], g, seed)
    raise UnsupportedArchitecture(f"unknown architecture {architecture!r}")


@dataclass
class ChainState:
    """Pre-activations of one chain (1-d arrays) or of a batch (2-d, chains as rows)."""

    v: np.ndarray
    hidden: tuple = ()
    t: float = 0.0

    @property
    def layers(self):
        return (self.v,) + tuple(self.hidden)

    @property
    def h(self):
        return self.hidden[0]

    @property
    def h1(self):
        return self.hidden[0]

    @property
    def h2(self):
        return self.hidden[1]

    def activations(self):
        return tuple(phi(x) for x in self.layers)


@dataclass
class SampleSet:
    samples: np.ndarray
    t_collected: float
    origin: str = "free-run"
    hidden: tuple = ()

    @property
    def layers(self):
        return (self.samples,) + tuple(self.hidden)


class Flow:
    """Right-hand side of the network ODE with scaled couplings precomputed.

    With ``clamp_visible`` set, the visible layer is held fixed and its
    activations are supplied to :meth:`step` instead of being integrated.
    """

    def __init__(self, params, cfg: SimConfig):
        self.params = params
        self.cfg = cfg
        self.rate = cfg.dt / cfg.tau
        self.decay = 1.0 - self.rate
        self.sizes = params.layer_sizes
        if isinstance(params, UnrestrictedParams):
            self.recurrent = ((params.J + params.A) / math.sqrt(params.n_v)).T
            self.fields = [params.b]
            self.down = self.up = ()
        elif isinstance(params, (RestrictedParams, DeepParams)):
            self.recurrent = None
            self.fields = params.layer_fields()
            self.down, self.up = [], []
            for l, (W, Wt, A) in enumerate(params.links()):
                # drive of layer l from layer l+1, and of layer l+1 from layer l
                self.down.append(((W + A) / math.sqrt(self.sizes[l + 1])).T)
                self.up.append((Wt.T + A) / math.sqrt(self.sizes[l]))
        else:
            raise UnsupportedArchitecture(f"unknown parameter type {type(params).__name__}")

    def check(self, layers):
        if len(layers) != len(self.sizes):
            raise InvalidArgument(
                f"{self.params.architecture} state needs {len(self.sizes)} layers, got {len(layers)}")
        for x, n in zip(layers, self.sizes):
            if x.shape[-1] != n:
                raise InvalidArgument(f"layer width {x.shape[-1]} does not match parameter size {n}")

    def step(self, layers, clamped_visible=None):
        """One Jacobi-style Euler step; every layer reads the pre-step state."""
        acts = [phi(x) for x in layers]
        if clamped_visible is not None:
            acts[0] = clamped_visible
        if self.recurrent is not None:
            drive = acts[0] @ self.recurrent + self.fields[0]
            return [self.decay * layers[0] + self.rate * drive]
        out = []
        top = len(layers) - 1
        for l, x in enumerate(layers):
            if l == 0 and clamped_visible is not None:
                out.append(x)
                continue
            drive = self.fields[l]
            if l < top:
                drive = acts[l + 1] @ self.down[l] + drive
            if l > 0:
                drive = acts[l - 1] @ self.up[l - 1] + drive
            out.append(self.decay * x + self.rate * drive)
        return out

    def run(self, layers, n_steps, clamped_visible=None):
        layers = list(layers)
        for _ in range(n_steps):
            layers = self.step(layers, clamped_visible)
        return layers


def euler_step(state: ChainState, params, cfg: SimConfig) -> ChainState:
    flow = Flow(params, cfg)
    layers = [np.asarray(x, dtype=np.float64) for x in state.layers]
    flow.check(layers)
    new = flow.step(layers)
    return ChainState(new[0], tuple(new[1:]), state.t + cfg.dt)


def _typed_step(kind):
    def stepper(state, params, cfg):
        if not isinstance(params, kind):
            raise UnsupportedArchitecture(
                f"expected {kind.architecture} parameters, got {params.architecture}")
        return euler_step(state, params, cfg)
    stepper.__name__ = f"euler_step_{kind.architecture}"
    stepper.__doc__ = f"Advance a {kind.architecture} chain state by one Euler step of size dt."
    return stepper


euler_step_unrestricted = _typed_step(UnrestrictedParams)
euler_step_restricted = _typed_step(RestrictedParams)
euler_step_deep = _typed_step(DeepParams)


def _chunks(m):
    return [range(s, min(s + CHUNK, m)) for s in range(0, m, CHUNK)]


def _map_chunks(fn, m, workers):
    chunks = _chunks(m)
    if workers and workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, chunks))
    return [fn(c) for c in chunks]


def simulate_free(params, cfg: SimConfig, m_chains, seed, key=(rngmod.FREE, 0),
                  t_target=None, workers=1) -> SampleSet:
    """Run ``m_chains`` free trajectories from standard-normal pre-activations.

    Chain ``r`` starts from ``rng.stream(seed, *key, r)``, so a chain's result
    is fixed by (seed, key, r) whatever the worker count.
    """
    if m_chains < 1:
        raise InvalidArgument("m_chains must be at least 1")
    t = cfg.t_target if t_target is None else t_target
    n_steps = cfg.steps_for(t)
    flow = Flow(params, cfg)

    def run_chunk(rows):
        init = rngmod.normal_rows(seed, key, rows, flow.sizes)
        return [phi(x) for x in flow.run(init, n_steps)]

    parts = _map_chunks(run_chunk, m_chains, workers)
    layers = [np.concatenate([p[l] for p in parts]) for l in range(len(flow.sizes))]
    return SampleSet(layers[0], float(t), "free-run", tuple(layers[1:]))


def _decay_factors(t, tau):
    return math.exp(-t / tau), -math.expm1(-t / tau)


def hidden_drive(params: RestrictedParams, xi):
    """Input to the hidden layer when the visible activations equal ``xi``."""
    return np.asarray(xi) @ ((params.W_tilde.T + params.A) / math.sqrt(params.n_v)) + params.c


def visible_drive(params: RestrictedParams, chi):
    """Input to the visible layer when the hidden activations equal ``chi``."""
    return np.asarray(chi) @ ((params.W + params.A).T / math.sqrt(params.n_h)) + params.b


def _require_restricted(params, what):
    if not isinstance(params, RestrictedParams):
        raise UnsupportedArchitecture(f"{what} is only defined for the restricted architecture")


def clamped_hidden_preactivation(params, xi, h0, cfg: SimConfig, t=None):
    _require_restricted(params, "the clamped-hidden closed form")
    t = cfg.t_target if t is None else t
    xi, h0 = np.asarray(xi, dtype=np.float64), np.asarray(h0, dtype=np.float64)
    if xi.shape[-1] != params.n_v or h0.shape[-1] != params.n_h:
        raise InvalidArgument("xi / h0 widths do not match (n_v, n_h)")
    keep, gain = _decay_factors(t, cfg.tau)
    return h0 * keep + hidden_drive(params, xi) * gain


def clamped_hidden_closed_form(params, xi, h0, cfg: SimConfig, t=None):
    """Hidden activations at time ``t`` (default T) with visibles clamped to ``xi``.

    The hidden ODE is linear once the visibles are fixed, so
    ``h(t) = h0 exp(-t/tau) + D (1 - exp(-t/tau))`` and the result is ``tanh(h(t))``.
    """
    return phi(clamped_hidden_preactivation(params, xi, h0, cfg, t))


def clamped_visible_closed_form(params, chi, v0, cfg: SimConfig, t=None):
    """Visible activations at time ``t`` with hidden activations clamped to ``chi``."""
    _require_restricted(params, "the clamped-visible closed form")
    t = cfg.t_target if t is None else t
    chi, v0 = np.asarray(chi, dtype=np.float64), np.asarray(v0, dtype=np.float64)
    if chi.shape[-1] != params.n_h or v0.shape[-1] != params.n_v:
        raise InvalidArgument("chi / v0 widths do not match (n_h, n_v)")
    keep, gain = _decay_factors(t, cfg.tau)
    return phi(v0 * keep + visible_drive(params, chi) * gain)


def simulate_clamped(params, xi, cfg: SimConfig, seed=0, key=(rngmod.CLAMP, 0),
                     hidden0=None, t=None, workers=1):
    """Euler-integrate the hidden layers with visible activations held at ``xi``.

    Works for the restricted and deep architectures. Hidden initial conditions
    are standard normal (row ``r`` from ``stream(seed, *key, r)``) unless
    ``hidden0`` is given. Returns the hidden activations at time ``t``.
    """
    if isinstance(params, UnrestrictedParams):
        raise UnsupportedArchitecture("the unrestricted architecture has no hidden layer")
    xi = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    if xi.shape[1] != params.n_v:
        raise InvalidArgument(f"xi width {xi.shape[1]} does not match n_v={params.n_v}")
    t = cfg.t_target if t is None else t
    n_steps = cfg.steps_for(t)
    flow = Flow(params, cfg)
    m = xi.shape[0]

    def run_chunk(rows):
        if hidden0 is None:
            hid = rngmod.normal_rows(seed, key, rows, flow.sizes[1:])
        else:
            hid = [np.atleast_2d(np.asarray(h, dtype=np.float64))[rows.start:rows.stop] for h in hidden0]
        xs = xi[rows.start:rows.stop]
        out = flow.run([xs] + hid, n_steps, clamped_visible=xs)
        return [phi(x) for x in out[1:]]

    parts = _map_chunks(run_chunk, m, workers)
    return tuple(np.concatenate([p[l] for p in parts]) for l in range(len(flow.sizes) - 1))


def simulate_clamped_deep(params, xi, cfg: SimConfig, seed=0, key=(rngmod.CLAMP, 0),
                          hidden0=None, t=None, workers=1):
    """Deep-model positive phase: returns ``(chi1, chi2)`` at time ``t``."""
    if not isinstance(params, DeepParams):
        raise UnsupportedArchitecture("simulate_clamped_deep needs deep parameters")
    return simulate_clamped(params, xi, cfg, seed, key, hidden0, t, workers)


def chaos_probe(params, cfg: SimConfig, delta0, t_probe, seed, record_every=1):
    """Separation between a reference trajectory and a perturbed clone.

    Both start from the same standard-normal state; the clone is displaced by a
    random vector of Euclidean norm ``delta0`` spread over all layers. Returns
    an ``(n, 2)`` array of ``(t, |phi(x) - phi(x')|)`` rows, starting at t=0.
    """
    if not delta0 > 0:
        raise InvalidArgument("delta0 must be positive")
    n_steps = cfg.steps_for(t_probe)
    flow = Flow(params, cfg)
    gen = rngmod.stream(seed, rngmod.PROBE)
    ref = [gen.standard_normal(n) for n in flow.sizes]
    kick = gen.standard_normal(sum(flow.sizes))
    kick *= delta0 / np.linalg.norm(kick)
    clone = [x + k for x, k in zip(ref, np.split(kick, np.cumsum(flow.sizes)[:-1]))]

    def sep():
        return math.sqrt(sum(float(np.sum((phi(a) - phi(b)) ** 2)) for a, b in zip(ref, clone)))

    rows = [(0.0, sep())]
    for s in range(1, n_steps + 1):
        ref = flow.step(ref)
        clone = flow.step(clone)
        if s % record_every == 0 or s == n_steps:
            rows.append((s * cfg.dt, sep()))
    return np.array(rows)
