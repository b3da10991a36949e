"""Full stack composition: dendrite layer, spatial pooling, fixed convolutional
mixing, repeated state-space blocks with normalization and residuals, and the
pooled affine readout.  Houses the tiny/small/normal size presets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import events as ev
from . import hippo
from . import kernel as kn
from . import neuron as nr


class ConfigError(ValueError):
    """Invalid model configuration; message names the offending field."""


VARIANT_PRESETS = {
    "tiny": {"dendrite_branches": 16, "conv_filters": 32, "readout_width": 256},
    "small": {"dendrite_branches": 32, "conv_filters": 64, "readout_width": 512},
    "normal": {"dendrite_branches": 64, "conv_filters": 128, "readout_width": 1024},
}


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "tiny"
    dendrite_branches: int = 16
    conv_filters: int = 32
    readout_width: int = 256
    num_ssm_blocks: int = 2
    spatial_pool: int = 2
    pool_factor: int = 4
    order: int = 16
    alpha0: float = 1.0
    taylor_order: int = 8
    rank: int = 4
    v_th: float = 0.5
    lif_tau: float = 0.02
    tau_min: float = 1e-3
    tau_max: float = 1.0
    no_dendrite: bool = False
    no_sa_hippo: bool = False
    mode: str = "recurrent"
    conv_length: int = 64
    dt_grid: float = 0.0  # 0 = median inter-batch interval
    readout_mode: str = "final"

    def __post_init__(self):
        if self.variant not in VARIANT_PRESETS:
            raise ConfigError(f"variant: unknown preset {self.variant!r}")
        for f in (
            "dendrite_branches",
            "conv_filters",
            "readout_width",
            "num_ssm_blocks",
            "spatial_pool",
            "pool_factor",
            "order",
            "taylor_order",
            "rank",
            "conv_length",
        ):
            if getattr(self, f) < 1:
                raise ConfigError(f"{f}: must be >= 1, got {getattr(self, f)}")
        if self.mode not in ("recurrent", "fft"):
            raise ConfigError(f"mode: must be 'recurrent' or 'fft', got {self.mode!r}")
        if self.readout_mode not in ("final", "concat"):
            raise ConfigError(
                f"readout_mode: must be 'final' or 'concat', got {self.readout_mode!r}"
            )
        if self.alpha0 < 0:
            raise ConfigError(f"alpha0: must be >= 0, got {self.alpha0}")
        if self.rank > self.order:
            raise ConfigError(
                f"rank: must be <= order ({self.order}), got {self.rank}"
            )


def config_from_variant(variant: str, **overrides) -> ModelConfig:
    """Preset-filled configuration; explicit overrides win field by field."""
    if variant not in VARIANT_PRESETS:
        raise ConfigError(f"variant: unknown preset {variant!r}")
    fields = dict(VARIANT_PRESETS[variant])
    fields.update(overrides)
    return ModelConfig(variant=variant, **fields)


def config_from_json(text: str) -> ModelConfig:
    doc = json.loads(text)
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a JSON object")
    variant = doc.pop("variant", "tiny")
    known = set(ModelConfig.__dataclass_fields__)
    for key in doc:
        if key not in known:
            raise ConfigError(f"{key}: unknown config field")
    return config_from_variant(variant, **doc)


def config_to_json(config: ModelConfig) -> str:
    return json.dumps(asdict(config), sort_keys=True, indent=2)


@dataclass(frozen=True)
class NormParams:
    """Feature normalization scale/shift; epsilon guards zero variance."""

    gamma: np.ndarray | float = 1.0
    beta_shift: np.ndarray | float = 0.0
    epsilon: float = 1e-5

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


def layer_norm(x: np.ndarray, params: NormParams = NormParams()) -> np.ndarray:
    """Center and scale over the feature dimension, then apply gamma, beta."""
    x = np.asarray(x, dtype=float)
    mu = x.mean()
    var = x.var()
    return (x - mu) / np.sqrt(var + params.epsilon) * params.gamma + params.beta_shift


def residual_add(x_in: np.ndarray, f_out: np.ndarray) -> np.ndarray:
    """Skip connection x + f(x); lengths must agree."""
    x_in = np.asarray(x_in)
    f_out = np.asarray(f_out)
    if x_in.shape != f_out.shape:
        raise ValueError(
            f"residual shapes differ: {x_in.shape} vs {f_out.shape}"
        )
    return x_in + f_out


def event_pool(states: list[np.ndarray] | np.ndarray, p: int) -> list[np.ndarray]:
    """Non-overlapping window means over the time axis.

    The trailing partial window is averaged over its actual length.
    """
    if p < 1:
        raise ValueError(f"pool factor must be >= 1, got {p}")
    states = [np.asarray(s, dtype=float) for s in states]
    out = []
    for start in range(0, len(states), p):
        window = states[start : start + p]
        out.append(sum(window) / len(window))
    return out


@dataclass(frozen=True)
class ReadoutHead:
    """Event pooling followed by an affine map onto class scores."""

    W: np.ndarray
    b: np.ndarray
    pool_factor: int = 1

    def __post_init__(self):
        if self.pool_factor < 1:
            raise ValueError(f"pool_factor must be >= 1, got {self.pool_factor}")


def readout_forward(
    head: ReadoutHead, states: list[np.ndarray], mode: str = "final"
) -> np.ndarray:
    """Pool the state sequence, reduce to one vector, apply W x + b.

    ``final`` keeps the last pooled vector; ``concat`` flattens the whole
    pooled sequence (W must be sized for it).  An empty sequence yields the
    bias alone.
    """
    if not states:
        return head.b.copy()
    pooled = event_pool(states, head.pool_factor)
    if mode == "final":
        vec = pooled[-1]
    elif mode == "concat":
        vec = np.concatenate(pooled)
    else:
        raise ValueError(f"unknown readout mode {mode!r}")
    if head.W.shape[1] != vec.shape[0]:
        raise ValueError(
            f"readout expects {head.W.shape[1]} features, got {vec.shape[0]}"
        )
    return head.W @ vec + head.b


def train_ridge_readout(
    features: np.ndarray, labels: np.ndarray, ridge: float = 1e-3
) -> ReadoutHead:
    """Closed-form ridge regression of one-hot targets on frozen features.

    Rows of ``features`` are examples.  The penalty applies to W only; the
    bias absorbs the class means, so W -> 0 and predictions collapse to the
    label distribution as ridge -> infinity.
    """
    x = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("need at least 2 classes")
    if ridge < 0:
        raise ValueError(f"ridge must be >= 0, got {ridge}")
    y = (labels[:, None] == classes[None, :]).astype(float)  # (n, K)
    x_mean = x.mean(axis=0)
    y_mean = y.mean(axis=0)
    xc = x - x_mean
    yc = y - y_mean
    gram = xc.T @ xc + ridge * np.eye(x.shape[1])
    if ridge == 0 and np.linalg.matrix_rank(gram) < x.shape[1]:
        raise ValueError(
            "normal equations are singular; pass ridge > 0 to regularize"
        )
    w = np.linalg.solve(gram, xc.T @ yc).T  # (K, F)
    b = y_mean - w @ x_mean
    return ReadoutHead(W=w, b=b, pool_factor=1)


def predict(head: ReadoutHead, features: np.ndarray) -> np.ndarray:
    """Class indices (argmax of scores) for rows of ``features``."""
    scores = features @ head.W.T + head.b
    return np.argmax(scores, axis=1)


@dataclass
class BlockTrace:
    """Per-tick diagnostics for one state-space block."""

    block: int
    times: list[float] = field(default_factory=list)
    state_norms: list[float] = field(default_factory=list)
    bounds: list[float] = field(default_factory=list)
    spike_counts: list[int] = field(default_factory=list)


@dataclass
class Diagnostics:
    """Forward-pass record: per-block traces plus structural flags."""

    input_batches: int = 0
    front_spikes: int = 0
    f_identity: bool = False
    dendrite_branches: int = 0
    mode: str = "recurrent"
    envelope_certified: bool = False
    traces: list[BlockTrace] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["block,t,state_norm,bound,spikes"]
        for tr in self.traces:
            for t, s, bd, sp in zip(
                tr.times, tr.state_norms, tr.bounds, tr.spike_counts
            ):
                lines.append(f"{tr.block},{t!r},{s!r},{bd!r},{sp}")
        return "\n".join(lines) + "\n"


def _instance_norm(x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    # x: (T, C, H, W); normalize each channel map independently
    mu = x.mean(axis=(2, 3), keepdims=True)
    sd = x.std(axis=(2, 3), keepdims=True)
    return (x - mu) / (sd + eps)


def _conv3_same(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    # x: (T, C, H, W), k: (F, C, 3, 3) -> (T, F, H, W); zero padded
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(2, 3))
    out = np.tensordot(windows, k, axes=([1, 4, 5], [1, 2, 3]))  # (T, H, W, F)
    return np.moveaxis(out, 3, 1)


def _max_pool2(x: np.ndarray) -> np.ndarray:
    # x: (T, C, H, W) -> ceil-halved spatial dims
    t, c, h, w = x.shape
    ph, pw = -(-h // 2), -(-w // 2)
    padded = np.full((t, c, 2 * ph, 2 * pw), -np.inf)
    padded[:, :, :h, :w] = x
    return padded.reshape(t, c, ph, 2, pw, 2).max(axis=(3, 5))


class _ConvMixer:
    """Two fixed 3x3 convolution blocks (filters drawn once from the run seed),
    each followed by parameter-free normalization and 2x2 max pooling; features
    are the per-filter global means.  Applied to the whole tick stack at once."""

    def __init__(self, filters: int, rng: np.random.Generator):
        scale = 1.0 / 3.0
        self.k1 = rng.normal(0.0, scale, size=(filters, 1, 3, 3))
        self.k2 = rng.normal(
            0.0, scale / math.sqrt(filters), size=(filters, filters, 3, 3)
        )

    def __call__(self, grids: np.ndarray) -> np.ndarray:
        # grids: (T, H, W) -> features (T, F)
        x = grids[:, None]
        x = _max_pool2(_instance_norm(_conv3_same(x, self.k1)))
        x = _max_pool2(_instance_norm(_conv3_same(x, self.k2)))
        return x.mean(axis=(2, 3))


def _grids_by_tick(
    stream: ev.EventStream,
) -> tuple[list[float], list[np.ndarray]]:
    w, h = stream.geometry
    times: list[float] = []
    grids: list[np.ndarray] = []
    grid = None
    for e in stream.events:
        if not times or e.t != times[-1]:
            times.append(e.t)
            grid = np.zeros((h, w))
            grids.append(grid)
        grid[e.y, e.x] += e.p
    return times, grids


def _block_envelope_params(m: np.ndarray) -> tuple[float, float]:
    """Decay rate and eigenvector conditioning for the spectral envelope.

    For non-normal dynamics the bare spectral envelope is violated by
    transients; the conditioning factor of the eigenvector basis restores a
    provable bound when the matrix stays fixed over the run.
    """
    eig, vecs = np.linalg.eig(m)
    alpha = float(np.min(np.abs(eig.real)))
    kappa = float(np.linalg.cond(vecs))
    return alpha, kappa


def forward(
    config: ModelConfig,
    stream: ev.EventStream,
    seed: int = 0,
) -> tuple[np.ndarray, Diagnostics]:
    """Run the full stack over an event stream.

    Deterministic for a fixed (config, stream, seed): all parameters are
    drawn from child generators of the one seed.
    """
    seq = np.random.SeedSequence(seed)
    s_layer, s_conv, s_blocks, s_head = seq.spawn(4)
    rng_conv = np.random.default_rng(s_conv)
    rng_head = np.random.default_rng(s_head)

    diag = Diagnostics(
        f_identity=config.no_sa_hippo,
        dendrite_branches=1 if config.no_dendrite else config.dendrite_branches,
        mode=config.mode,
        envelope_certified=config.no_sa_hippo or config.alpha0 == 0.0,
    )

    batches = ev.batch_by_timestamp(stream)
    diag.input_batches = len(batches)

    w, h = stream.geometry
    num_neurons = w * h
    branches = 1 if config.no_dendrite else config.dendrite_branches
    layer = nr.build_layer(
        num_neurons=num_neurons,
        num_channels=stream.channels,
        branches_per_neuron=branches,
        seed=s_layer.generate_state(1)[0],
        tau_min=config.lif_tau if config.no_dendrite else config.tau_min,
        tau_max=config.lif_tau if config.no_dendrite else config.tau_max,
        tau_s=config.lif_tau,
        v_th=config.v_th,
        receptive=[[i] for i in range(num_neurons)],
    )
    front = nr.layer_forward(layer, batches, geometry=stream.geometry)
    diag.front_spikes = len(front)

    times, grids = _grids_by_tick(front)
    mixer = _ConvMixer(config.conv_filters, rng_conv)
    pool_cfg = nr.PoolConfig(window=config.spatial_pool, geometry=stream.geometry)
    if grids:
        pooled = np.stack([nr.spatial_max_pool(g, pool_cfg) for g in grids])
        features = list(mixer(pooled))
    else:
        features = []

    n_feat = config.conv_filters
    block_alpha0 = 0.0 if config.no_sa_hippo else config.alpha0
    block_states = features
    for bi in range(config.num_ssm_blocks):
        child = s_blocks.spawn(1)[0]
        kern = hippo.make_kernel(
            order=config.order,
            input_dim=n_feat,
            output_dim=n_feat,
            alpha0=block_alpha0,
            seed=child.generate_state(1)[0],
        )
        trace = BlockTrace(block=bi)
        s_inf = max((float(np.linalg.norm(u)) for u in block_states), default=0.0)
        alpha, kappa = _block_envelope_params(kern.dynamics_matrix())
        norm_b = kn.spectral_norm(kern.B)
        outputs: list[np.ndarray] = []
        if config.mode == "recurrent" or not block_states:
            state = kn.KernelState.zeros(config.order)
            for t, u in zip(times, block_states):
                state = kn.step(
                    kern,
                    state,
                    ev.SpikeBatch(t=t, values=u),
                    terms=config.taylor_order,
                )
                y = kn.readout(kern, state)
                # state clock starts at 0, so elapsed time is t itself
                env = kappa * (norm_b * s_inf / alpha) * (1.0 - math.exp(-alpha * t)) if alpha > 0 else math.inf
                trace.times.append(t)
                trace.state_norms.append(float(np.linalg.norm(state.x)))
                trace.bounds.append(env)
                trace.spike_counts.append(
                    int(kn.threshold_spikes(y, config.v_th).sum())
                )
                outputs.append(y)
        else:
            gaps = np.diff(times)
            dt_grid = config.dt_grid or (float(np.median(gaps)) if gaps.size else 1.0)
            a_s = hippo.adaptive_matrix(kern, dt_grid)
            factors = kn.nplr_decompose(a_s, config.rank)
            ck = kn.build_conv_kernel(
                kern, factors, length=min(config.conv_length, len(block_states)), dt_grid=dt_grid
            )
            samples = ck.samples if ck.samples.ndim == 3 else ck.samples[:, None, None]
            u_mat = np.stack(block_states)
            y_mat = kn.fft_convolve_multi(samples, u_mat) * dt_grid
            for t, y in zip(times, y_mat):
                trace.times.append(t)
                trace.state_norms.append(float(np.linalg.norm(y)))
                trace.bounds.append(math.nan)
                trace.spike_counts.append(
                    int(kn.threshold_spikes(y, config.v_th).sum())
                )
                outputs.append(y)
        norm_params = NormParams()
        block_states = [
            residual_add(u, layer_norm(y, norm_params))
            for u, y in zip(block_states, outputs)
        ]
        diag.traces.append(trace)

    head = _build_head(config, n_feat, rng_head)
    scores = readout_forward(head, block_states, mode=config.readout_mode)
    return scores, diag


def _build_head(
    config: ModelConfig, n_feat: int, rng: np.random.Generator
) -> ReadoutHead:
    return ReadoutHead(
        W=rng.normal(0.0, 1.0 / math.sqrt(n_feat), size=(config.readout_width, n_feat)),
        b=rng.normal(0.0, 1.0, size=config.readout_width),
        pool_factor=config.pool_factor,
    )
