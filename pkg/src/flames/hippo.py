"""Structured memory matrices: the Legendre base matrix and its spike-aware
interval-decayed variant A_S = (s*A) o F(dt).

The base matrix is stored exactly as constructed (positive diagonal); the
stability sign s (default -1) is applied when forming the dynamics matrix so
that the state dynamics are Hurwitz.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


def hippo_legs(order: int) -> np.ndarray:
    """Legendre memory matrix: A[n][n] = n+1, A[n][k] = -sqrt((2n+1)(2k+1)) for n > k.

    0-based indexing; strictly upper triangle is zero.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    n = np.arange(order)
    a = -np.sqrt(np.outer(2 * n + 1, 2 * n + 1))
    return np.tril(a, -1) + np.diag(n + 1.0)


@dataclass(frozen=True)
class DecayParams:
    """Per-entry decay rates alpha_ij >= 0, in 1/second."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"alpha must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ValueError("alpha entries must be finite and >= 0")
        object.__setattr__(self, "alpha", a)

    @classmethod
    def uniform(cls, order: int, alpha0: float = 1.0) -> "DecayParams":
        return cls(np.full((order, order), float(alpha0)))


def decay_matrix(params: DecayParams, dt: float) -> np.ndarray:
    """Interval decay F(dt) with F[i][j] = exp(-alpha[i][j] * dt); entries in (0, 1]."""
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    return np.exp(-params.alpha * dt)


@dataclass(frozen=True)
class StabilityReport:
    """Eigenvalue check of a dynamics matrix; flags nonnegative real parts."""

    eigenvalues: np.ndarray
    unstable_indices: tuple[int, ...]

    @property
    def is_hurwitz(self) -> bool:
        return not self.unstable_indices


def stability_report(matrix: np.ndarray) -> StabilityReport:
    eig = np.linalg.eigvals(matrix)
    bad = tuple(int(i) for i in np.flatnonzero(eig.real >= 0))
    return StabilityReport(eigenvalues=eig, unstable_indices=bad)


@dataclass(frozen=True)
class SaHippoKernel:
    """Base matrix A, decay parameters, and couplings B (N x M), C (P x N).

    ``stability_sign`` s is applied as s*A in the dynamics; with the default
    s = -1 the dynamics matrix is lower triangular with diagonal -(n+1),
    hence Hurwitz.  ``dt_max`` clamps the interval used for exponentiation
    (series accuracy guard); it defaults to 10/alpha0 when built from a
    uniform decay, else no clamp.
    """

    A: np.ndarray
    alpha: DecayParams
    B: np.ndarray
    C: np.ndarray
    stability_sign: int = -1
    dt_max: float = np.inf
    init: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.alpha.alpha.shape != (n, n):
            raise ValueError("alpha shape does not match A")
        if self.B.ndim != 2 or self.B.shape[0] != n:
            raise ValueError(f"B must be N x M with N={n}, got {self.B.shape}")
        if self.C.ndim != 2 or self.C.shape[1] != n:
            raise ValueError(f"C must be P x N with N={n}, got {self.C.shape}")
        if self.stability_sign not in (-1, 1):
            raise ValueError("stability_sign must be -1 or +1")

    @property
    def order(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]

    @property
    def output_dim(self) -> int:
        return self.C.shape[0]

    def dynamics_matrix(self) -> np.ndarray:
        return self.stability_sign * self.A


def make_kernel(
    order: int,
    input_dim: int = 1,
    output_dim: int = 1,
    alpha0: float = 1.0,
    seed: int = 0,
    stability_sign: int = -1,
    alpha: np.ndarray | None = None,
) -> SaHippoKernel:
    """Build a kernel with the Legendre base matrix and seeded Gaussian couplings.

    B and C entries are zero-mean with standard deviation 1/sqrt(N).  Decay
    rates are uniform at ``alpha0`` unless a full ``alpha`` matrix is given.
    """
    a = hippo_legs(order)
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(order)
    b = rng.normal(0.0, scale, size=(order, input_dim))
    c = rng.normal(0.0, scale, size=(output_dim, order))
    init = {
        "order": order,
        "input_dim": input_dim,
        "output_dim": output_dim,
        "seed": seed,
        "stability_sign": stability_sign,
    }
    if alpha is not None:
        params = DecayParams(np.asarray(alpha, dtype=float))
        rate = float(params.alpha.max())
        init["alpha"] = params.alpha.tolist()
    else:
        params = DecayParams.uniform(order, alpha0)
        rate = alpha0
        init["alpha0"] = alpha0
    dt_max = 10.0 / rate if rate > 0 else np.inf
    return SaHippoKernel(
        A=a,
        alpha=params,
        B=b,
        C=c,
        stability_sign=stability_sign,
        dt_max=dt_max,
        init=init,
    )


def adaptive_matrix(
    kernel: SaHippoKernel, dt: float, report: bool = False
) -> np.ndarray | tuple[np.ndarray, StabilityReport]:
    """Interval-adapted dynamics matrix A_S = (s*A) o F(dt) (Hadamard product).

    With ``report=True`` also returns the eigenvalue stability check; the
    Hadamard product is not guaranteed to preserve the Hurwitz property, so
    violations are flagged rather than raised.
    """
    f = decay_matrix(kernel.alpha, dt)
    a_s = kernel.dynamics_matrix() * f
    if report:
        return a_s, stability_report(a_s)
    return a_s


def kernel_to_json(kernel: SaHippoKernel) -> str:
    """Serialize a factory-built kernel's parameters to JSON."""
    if not kernel.init:
        raise ValueError(
            "only kernels built by make_kernel() carry serializable parameters"
        )
    return json.dumps(kernel.init, sort_keys=True)


def kernel_from_json(text: str) -> SaHippoKernel:
    doc = json.loads(text)
    return make_kernel(
        order=int(doc["order"]),
        input_dim=int(doc.get("input_dim", 1)),
        output_dim=int(doc.get("output_dim", 1)),
        alpha0=float(doc.get("alpha0", 1.0)),
        seed=int(doc.get("seed", 0)),
        stability_sign=int(doc.get("stability_sign", -1)),
        alpha=np.asarray(doc["alpha"]) if "alpha" in doc else None,
    )
