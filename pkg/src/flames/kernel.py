"""Event-driven state propagation.

Covers the truncated-series matrix exponential and its phi companion, the
asynchronous discrete state update, the normal-plus-low-rank fast path for
matrix-vector products, and FFT convolution against the sampled impulse
response.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .hippo import SaHippoKernel, adaptive_matrix
from .events import SpikeBatch


class AccuracyWarning(UserWarning):
    """Operation left its accurate regime; results degrade gracefully."""


class TemporalOrderError(ValueError):
    """An update was requested for a time earlier than the state's clock."""


class UnstableKernelError(ValueError):
    """Impulse-response sampling requires all modes to decay."""


def spectral_norm(m: np.ndarray, iters: int = 100, tol: float = 1e-10) -> float:
    """Largest singular value by power iteration on m*m, deterministic start."""
    m = np.asarray(m)
    n = m.shape[1]
    v = np.full(n, 1.0 / np.sqrt(n), dtype=complex if np.iscomplexobj(m) else float)
    mh = m.conj().T
    last = 0.0
    for _ in range(iters):
        w = mh @ (m @ v)
        s = np.linalg.norm(w)
        if s == 0.0:
            return 0.0
        v = w / s
        if abs(s - last) <= tol * s:
            break
        last = s
    return float(np.sqrt(s))


def _taylor_coeffs(n: int) -> np.ndarray:
    c = np.ones(n + 1)
    for k in range(1, n + 1):
        c[k] = c[k - 1] / k
    return c


def expm_taylor(
    m: np.ndarray, dt: float, terms: int = 8, radius: float = 2.0
) -> np.ndarray:
    """Truncated series for exp(m*dt): sum_{k=0}^{terms} (m*dt)^k / k!.

    Horner accumulation of matrix powers.  When ||m*dt|| exceeds ``radius``
    the result is still returned but an AccuracyWarning is emitted.
    """
    if terms < 1:
        raise ValueError(f"terms must be >= 1, got {terms}")
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    x = np.asarray(m, dtype=float) * dt
    if spectral_norm(x) > radius:
        warnings.warn(
            f"||m*dt|| exceeds radius {radius}; series accuracy degraded",
            AccuracyWarning,
            stacklevel=2,
        )
    n = x.shape[0]
    eye = np.eye(n)
    c = _taylor_coeffs(terms)
    out = eye * c[terms]
    for k in range(terms - 1, -1, -1):
        out = x @ out + eye * c[k]
    return out


def phi_matrix(m: np.ndarray, dt: float, terms: int = 8) -> np.ndarray:
    """Inversion-free series dt*I + m*dt^2/2! + ... + m^(terms-1)*dt^terms/terms!.

    Equals inv(m) @ (expm(m*dt) - I) when m is invertible, but stays finite
    for singular m (and collapses to dt*I at m = 0).
    """
    if terms < 1:
        raise ValueError(f"terms must be >= 1, got {terms}")
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    x = np.asarray(m, dtype=float) * dt
    n = x.shape[0]
    eye = np.eye(n)
    c = _taylor_coeffs(terms)  # c[k] = 1/k!; phi uses 1/(j+1)! on (m*dt)^j
    out = eye * c[terms]
    for j in range(terms - 2, -1, -1):
        out = x @ out + eye * c[j + 1]
    return dt * out


def _expm_apply(x: np.ndarray, v: np.ndarray, terms: int) -> np.ndarray:
    # sum_{k=0}^{terms} x^k/k! v via repeated matvec; the O(N^2)-per-event path
    acc = v.copy()
    w = v
    for k in range(1, terms + 1):
        w = (x @ w) / k
        acc += w
    return acc


def _phi_apply(x: np.ndarray, dt: float, v: np.ndarray, terms: int) -> np.ndarray:
    w = dt * v
    acc = w.copy()
    for j in range(1, terms):
        w = (x @ w) / (j + 1)
        acc += w
    return acc


@dataclass(frozen=True)
class KernelState:
    """State vector plus the timestamp of its most recent update."""

    x: np.ndarray
    last_t: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("state entries must be finite")
        object.__setattr__(self, "x", x)

    @classmethod
    def zeros(cls, order: int, t: float = 0.0) -> "KernelState":
        return cls(x=np.zeros(order), last_t=t)


def step(
    kernel: SaHippoKernel,
    state: KernelState,
    batch: SpikeBatch,
    terms: int = 8,
) -> KernelState:
    """Advance the state across one inter-spike interval and absorb the batch.

    With dt = batch.t - state.last_t and A_S the interval-adapted matrix:
    x' = expm(A_S*dt) x + phi(A_S*dt) B S, both series evaluated by repeated
    matrix-vector products.  dt is clamped to kernel.dt_max before entering
    the series (the decay has already driven A_S toward zero out there).
    """
    dt = batch.t - state.last_t
    if dt < 0:
        raise TemporalOrderError(
            f"batch at t={batch.t} precedes state clock t={state.last_t}"
        )
    a_s = adaptive_matrix(kernel, dt)
    dt_eff = min(dt, kernel.dt_max)
    x = a_s * dt_eff
    drive = kernel.B @ batch.values
    new_x = _expm_apply(x, state.x, terms) + _phi_apply(x, dt_eff, drive, terms)
    return KernelState(x=new_x, last_t=batch.t)


def readout(kernel: SaHippoKernel, state: KernelState) -> np.ndarray:
    """Continuous output y = C x."""
    return kernel.C @ state.x


def threshold_spikes(y: np.ndarray, v_th: float) -> np.ndarray:
    """Elementwise spike indicator 1(y > v_th); strict inequality."""
    if not np.isfinite(v_th):
        raise ValueError(f"v_th must be finite, got {v_th}")
    return (np.asarray(y) > v_th).astype(int)


@dataclass(frozen=True)
class NplrFactors:
    """Normal-plus-low-rank factors: A ~ V diag(Lambda) V* - P Q*."""

    V: np.ndarray
    Lambda: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    rank: int
    residual_fro: float

    def __post_init__(self):
        n = self.V.shape[0]
        unit = np.linalg.norm(self.V @ self.V.conj().T - np.eye(n))
        if unit > 1e-10:
            raise ValueError(f"V is not unitary: ||VV* - I||_F = {unit:.2e}")
        if self.rank > n:
            raise ValueError(f"rank {self.rank} exceeds dimension {n}")


def nplr_decompose(a_s: np.ndarray, rank: int) -> NplrFactors:
    """Split a_s into a unitarily diagonalized normal part and a rank-r correction.

    The normal part is taken from the skew component plus the diagonal of
    a_s; its Schur form supplies the unitary V and the diagonal Lambda.  When
    a_s is already normal it is diagonalized directly, making the residual
    exactly zero.  The correction (P, Q) is the best rank-r factorization of
    the residual (truncated SVD), so the reported Frobenius error is
    nonincreasing in the rank and vanishes at full rank.
    """
    a_s = np.asarray(a_s, dtype=float)
    n = a_s.shape[0]
    if not 1 <= rank <= n:
        raise ValueError(f"rank must be in [1, {n}], got {rank}")
    scale = max(1.0, float(np.linalg.norm(a_s)))
    commutator = a_s @ a_s.T - a_s.T @ a_s
    if np.linalg.norm(commutator) <= 1e-12 * scale**2:
        target = a_s
    else:
        target = (a_s - a_s.T) / 2 + np.diag(np.diag(a_s))
    t, v = scipy.linalg.schur(target.astype(complex), output="complex")
    lam = np.diag(t)
    residual = a_s - (v * lam) @ v.conj().T
    u, s, wh = np.linalg.svd(-residual)
    s = s.copy()
    s[s <= 1e-12 * max(1.0, s[0])] = 0.0  # exact zeros for normal inputs
    root = np.sqrt(s[:rank])
    p = u[:, :rank] * root
    q = wh[:rank, :].conj().T * root
    err = float(np.sqrt(np.sum(s[rank:] ** 2)))
    return NplrFactors(V=v, Lambda=lam, P=p, Q=q, rank=rank, residual_fro=err)


def nplr_matvec(factors: NplrFactors, v: np.ndarray) -> np.ndarray:
    """Apply the factored matrix: V (Lambda o (V* v)) - P (Q* v).

    Only diagonal scaling and rank-r products; matches the dense product up
    to the decomposition residual.  Real input yields the real part (the
    imaginary residue of a real-matrix factorization is rounding noise).
    """
    v = np.asarray(v)
    out = factors.V @ (factors.Lambda * (factors.V.conj().T @ v))
    if factors.P.size:
        out = out - factors.P @ (factors.Q.conj().T @ v)
    if np.isrealobj(v):
        return out.real
    return out


@dataclass(frozen=True)
class ConvKernel:
    """Sampled impulse response of the normal part, run through C and B.

    ``samples`` has shape (length,) for single-input single-output kernels
    and (length, P, M) otherwise; ``dt_grid`` is the sampling step.
    """

    samples: np.ndarray
    length: int
    dt_grid: float

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"length must be >= 1, got {self.length}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("kernel samples must be finite")


def build_conv_kernel(
    kernel: SaHippoKernel,
    factors: NplrFactors,
    length: int,
    dt_grid: float,
) -> ConvKernel:
    """Sample h[k] = C V diag(exp(Lambda*k*dt_grid)) V* B for k = 0..length-1.

    Time-domain realization of the frequency kernel 1/(w - Lambda) restricted
    to the normal part; the low-rank correction stays in the recurrent path.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if dt_grid <= 0:
        raise ValueError(f"dt_grid must be > 0, got {dt_grid}")
    if np.any(factors.Lambda.real > 0):
        bad = np.flatnonzero(factors.Lambda.real > 0)
        raise UnstableKernelError(
            f"modes {bad.tolist()} have positive real part; response diverges"
        )
    left = kernel.C @ factors.V                  # (P, N)
    right = factors.V.conj().T @ kernel.B        # (N, M)
    k = np.arange(length)
    z = np.exp(np.outer(k, factors.Lambda * dt_grid))   # (L, N)
    samples = np.einsum("pn,ln,nm->lpm", left, z, right)
    if samples.shape[1] == 1 and samples.shape[2] == 1:
        samples = samples[:, 0, 0]
    return ConvKernel(samples=samples, length=length, dt_grid=dt_grid)


def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def fft_convolve(k: ConvKernel, u: np.ndarray) -> np.ndarray:
    """Linear convolution of u with the kernel samples, truncated to len(u).

    Both operands are zero-padded to the next power of two at or above
    T + L - 1, so there is no circular wraparound.  Real input returns the
    real part.
    """
    u = np.asarray(u)
    if u.ndim != 1 or u.size < 1:
        raise ValueError("u must be a nonempty 1-D sequence")
    if np.asarray(k.samples).ndim != 1:
        raise ValueError("fft_convolve expects a single-channel kernel")
    t = u.size
    nfft = _next_pow2(t + k.length - 1)
    spec = np.fft.fft(k.samples, nfft) * np.fft.fft(u, nfft)
    out = np.fft.ifft(spec)[:t]
    if np.isrealobj(u):
        return out.real
    return out


def fft_convolve_multi(samples: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Multichannel variant: samples (L, P, M) convolved with u (T, M) -> (T, P)."""
    t = u.shape[0]
    nfft = _next_pow2(t + samples.shape[0] - 1)
    hk = np.fft.fft(samples, nfft, axis=0)
    uk = np.fft.fft(u, nfft, axis=0)
    out = np.fft.ifft(np.einsum("lpm,lm->lp", hk, uk), axis=0)[:t]
    if np.isrealobj(u):
        return out.real
    return out
