"""Event-driven spiking state-space toolkit.

Layers of the stack, bottom up: spike-event streams (:mod:`flames.events`),
interval-decayed memory matrices (:mod:`flames.hippo`), asynchronous state
propagation with low-rank and FFT fast paths (:mod:`flames.kernel`),
dendritic neurons and spatial pooling (:mod:`flames.neuron`), the composed
model (:mod:`flames.model`), and the executable verification suite
(:mod:`flames.analysis`).
"""

__version__ = "0.1.0"

from .events import (
    EventStream,
    SpikeBatch,
    SpikeEvent,
    batch_by_timestamp,
    generate_periodic,
    generate_poisson,
    ingest_events,
    serialize_events,
)
from .hippo import (
    DecayParams,
    SaHippoKernel,
    adaptive_matrix,
    decay_matrix,
    hippo_legs,
    make_kernel,
)
from .kernel import (
    ConvKernel,
    KernelState,
    NplrFactors,
    build_conv_kernel,
    expm_taylor,
    fft_convolve,
    nplr_decompose,
    nplr_matvec,
    phi_matrix,
    readout,
    step,
    threshold_spikes,
)
from .model import (
    ModelConfig,
    ReadoutHead,
    config_from_variant,
    event_pool,
    forward,
    layer_norm,
    residual_add,
    train_ridge_readout,
)
from .neuron import DendriteBranch, DhLifNeuron, PoolConfig, spatial_max_pool

__all__ = [name for name in dir() if not name.startswith("_")]
