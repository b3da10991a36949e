"""Dendritic leaky integrate-and-fire neurons and spatial pooling.

Each neuron carries several dendritic branches with heterogeneous time
constants; branch currents decay between ticks and integrate presynaptic
magnitudes, the soma aggregates them through per-branch couplings and fires
on strictly exceeding its threshold, resetting to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .events import EventStream, SpikeBatch, SpikeEvent


@dataclass
class DendriteBranch:
    """One dendritic compartment: time constant tau_d (ticks or seconds),
    presynaptic weights, and its stateful current."""

    tau_d: float
    weights: dict[int, float]
    current: float = 0.0

    def __post_init__(self):
        if self.tau_d <= 0:
            raise ValueError(f"tau_d must be > 0, got {self.tau_d}")

    def decay(self, dt: float = 1.0) -> float:
        return math.exp(-dt / self.tau_d)


def dendrite_step(
    branch: DendriteBranch, inputs: dict[int, float], dt: float = 1.0
) -> float:
    """i_d <- exp(-dt/tau_d) * i_d + sum_j w_j p_j over connected channels.

    Inputs on channels outside the branch's receptive set are ignored.
    The unit-step form of the recurrence is dt = 1.
    """
    drive = 0.0
    for j, w in branch.weights.items():
        p = inputs.get(j)
        if p is not None:
            drive += w * p
    branch.current = branch.decay(dt) * branch.current + drive
    return branch.current


@dataclass
class DhLifNeuron:
    """Soma with multiple dendritic branches; fires when v strictly exceeds v_th."""

    branches: list[DendriteBranch]
    g: np.ndarray
    tau_s: float
    v_th: float = 1.0
    v: float = 0.0

    def __post_init__(self):
        if self.tau_s <= 0:
            raise ValueError(f"tau_s must be > 0, got {self.tau_s}")
        self.g = np.asarray(self.g, dtype=float)
        if self.g.shape != (len(self.branches),):
            raise ValueError("one coupling strength per branch required")


def soma_step(neuron: DhLifNeuron, dt: float = 1.0) -> tuple[float, bool]:
    """v <- exp(-dt/tau_s) * v + sum_d g_d i_d; returns (potential, spiked).

    Branch currents must already be stepped for this tick.  The returned
    potential is the pre-reset value; on a spike v resets to 0 afterwards.
    """
    beta = math.exp(-dt / neuron.tau_s)
    total = float(
        sum(g * b.current for g, b in zip(neuron.g, neuron.branches))
    )
    v = beta * neuron.v + total
    spiked = v > neuron.v_th
    neuron.v = 0.0 if spiked else v
    return v, spiked


def log_spaced_taus(count: int, tau_min: float = 1e-3, tau_max: float = 1.0) -> np.ndarray:
    """Branch time constants, logarithmically spaced across the configured span."""
    if count == 1:
        return np.array([tau_max])
    return np.geomspace(tau_min, tau_max, count)


def build_layer(
    num_neurons: int,
    num_channels: int,
    branches_per_neuron: int,
    seed: int = 0,
    tau_min: float = 1e-3,
    tau_max: float = 1.0,
    tau_s: float = 0.02,
    v_th: float = 0.5,
    receptive: list[list[int]] | None = None,
    shared_weights: bool = False,
) -> list[DhLifNeuron]:
    """Construct a layer of DH-LIF neurons with seeded Gaussian branch weights.

    ``receptive[i]`` lists the input channels neuron i listens to (default:
    channel i, one-to-one).  Branch weights have std 1/sqrt(fan-in); couplings
    are 1/D.  With ``shared_weights`` every neuron reuses neuron 0's weight
    draw (convolutional mode); the default is independent weights.
    """
    rng = np.random.default_rng(seed)
    taus = log_spaced_taus(branches_per_neuron, tau_min, tau_max)
    if receptive is None:
        receptive = [[i % num_channels] for i in range(num_neurons)]
    shared: list[np.ndarray] | None = None
    neurons = []
    for i in range(num_neurons):
        chans = receptive[i]
        scale = 1.0 / math.sqrt(len(chans))
        branches = []
        if shared_weights and shared is not None:
            draws = shared
        else:
            draws = [rng.normal(0.0, scale, size=len(chans)) for _ in taus]
            if shared_weights:
                shared = draws
        for tau, w in zip(taus, draws):
            branches.append(
                DendriteBranch(tau_d=float(tau), weights=dict(zip(chans, w)))
            )
        neurons.append(
            DhLifNeuron(
                branches=branches,
                g=np.full(branches_per_neuron, 1.0 / branches_per_neuron),
                tau_s=tau_s,
                v_th=v_th,
            )
        )
    return neurons


def layer_forward(
    layer: list[DhLifNeuron],
    batches: list[SpikeBatch],
    geometry: tuple[int, int] | None = None,
    neuron_coords: list[tuple[int, int]] | None = None,
    unit_step: bool = False,
) -> EventStream:
    """Tick the whole layer over a batch sequence; one tick per batch.

    All dendrites step first, then all somas; each soma spike emits one
    output event stamped with the batch time.  Tick decays use the actual
    inter-batch interval unless ``unit_step`` forces the unit recurrence.

    The recurrences run vectorized over all branches (equivalent to calling
    dendrite_step and soma_step per compartment, which remain the reference
    semantics); final currents and potentials are written back to the
    neuron objects.
    """
    n = len(layer)
    if geometry is None:
        geometry = (n, 1)
    if neuron_coords is None:
        neuron_coords = [(i % geometry[0], i // geometry[0]) for i in range(n)]
    if not batches:
        return EventStream((), geometry, channels=n)

    num_channels = batches[0].values.shape[0]
    flat: list[DendriteBranch] = [b for nrn in layer for b in nrn.branches]
    owner = np.concatenate(
        [np.full(len(nrn.branches), i) for i, nrn in enumerate(layer)]
    )
    inv_tau = np.array([1.0 / b.tau_d for b in flat])
    weight = np.zeros((len(flat), num_channels))
    for row, branch in enumerate(flat):
        for c, w in branch.weights.items():
            weight[row, c] = w
    currents = np.array([b.current for b in flat])
    gains = np.concatenate([nrn.g for nrn in layer])
    inv_tau_s = np.array([1.0 / nrn.tau_s for nrn in layer])
    v = np.array([nrn.v for nrn in layer])
    v_th = np.array([nrn.v_th for nrn in layer])

    events: list[SpikeEvent] = []
    last_t: float | None = None
    for batch in batches:
        if unit_step or last_t is None:
            dt = 1.0
        else:
            dt = batch.t - last_t
            if dt <= 0:
                dt = 1e-12  # coincident batches: decay is a no-op
        last_t = batch.t
        currents = np.exp(-dt * inv_tau) * currents + weight @ batch.values
        soma_drive = np.bincount(owner, weights=gains * currents, minlength=n)
        v = np.exp(-dt * inv_tau_s) * v + soma_drive
        spiked = v > v_th
        v[spiked] = 0.0
        for i in np.flatnonzero(spiked):
            x, y = neuron_coords[i]
            events.append(SpikeEvent(x=int(x), y=int(y), t=batch.t, p=1.0))

    for branch, c in zip(flat, currents):
        branch.current = float(c)
    for i, nrn in enumerate(layer):
        nrn.v = float(v[i])
    return EventStream(tuple(events), geometry, channels=n)


@dataclass(frozen=True)
class PoolConfig:
    """k x k pooling window over a (width, height) grid; stride defaults to k."""

    window: int
    geometry: tuple[int, int]
    stride: int = 0

    def __post_init__(self):
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.stride == 0:
            object.__setattr__(self, "stride", self.window)

    @property
    def out_shape(self) -> tuple[int, int]:
        w, h = self.geometry
        return (
            -(-w // self.stride),  # ceil division
            -(-h // self.stride),
        )


def spatial_max_pool(
    activity: np.ndarray,
    cfg: PoolConfig,
    return_argmax: bool = False,
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Per-window maximum of one timestep's activity grid (rows = y, cols = x).

    Applied independently at each timestep; edge windows cover whatever cells
    remain.  Optional argmax returns, per window, the flat grid index of the
    first maximal cell in row-major scan order.
    """
    activity = np.asarray(activity)
    w, h = cfg.geometry
    if activity.shape != (h, w):
        raise ValueError(
            f"activity shape {activity.shape} does not match geometry "
            f"{w}x{h} (expected (height, width))"
        )
    ow, oh = cfg.out_shape
    pooled = np.empty((oh, ow), dtype=activity.dtype)
    arg = np.empty((oh, ow), dtype=int)
    s = cfg.stride
    k = cfg.window
    for j in range(oh):
        for i in range(ow):
            block = activity[j * s : j * s + k, i * s : i * s + k]
            pooled[j, i] = block.max()
            if return_argmax:
                local = int(np.argmax(block))
                ly, lx = divmod(local, block.shape[1])
                arg[j, i] = (j * s + ly) * w + (i * s + lx)
    if return_argmax:
        return pooled, arg
    return pooled
