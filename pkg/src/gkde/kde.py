"""Scalar-bandwidth Gaussian kernel density evaluation, linear and log space.

K_h(delta) = h^-d (2 pi)^-d/2 exp(-|delta|^2 / (2 h^2)); the class density is
the mean of K_h over the anchors. Reductions go through numpy's pairwise
summation in anchor storage order.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import logsumexp

from .errors import ContractError, ShapeError

LOG_2PI = math.log(2.0 * math.pi)
DEFAULT_CLIP = -700.0


@dataclass(frozen=True)
class KernelSpec:
    dim: int
    bandwidth: float

    def __post_init__(self):
        if self.dim < 1:
            raise ContractError("kernel dimension must be >= 1")
        if not self.bandwidth > 0:
            raise ContractError("bandwidth must be positive")

    @property
    def log_norm(self) -> float:
        """log of h^-d (2 pi)^-d/2."""
        return -self.dim * math.log(self.bandwidth) - 0.5 * self.dim * LOG_2PI


@dataclass(frozen=True)
class KernelConstants:
    roughness: float  # R(K) = int K^2
    second_moment: float  # mu_2(K) = int z^2 K, per coordinate


def gaussian_constants(dim: int = 1) -> KernelConstants:
    """R(K) = (4 pi)^-d/2 and mu_2(K) = 1 for the standard normal kernel."""
    return KernelConstants((4.0 * math.pi) ** (-dim / 2.0), 1.0)


def _delta(spec: KernelSpec, delta) -> np.ndarray:
    delta = np.asarray(delta, dtype=np.float64).reshape(-1)
    if delta.size != spec.dim:
        raise ShapeError(f"delta has length {delta.size}, kernel dimension is {spec.dim}")
    return delta


def log_kernel_h(spec: KernelSpec, delta) -> float:
    delta = _delta(spec, delta)
    return spec.log_norm - float(delta @ delta) / (2.0 * spec.bandwidth**2)


def kernel_h(spec: KernelSpec, delta) -> float:
    return math.exp(log_kernel_h(spec, delta))


@dataclass(frozen=True)
class ClassPdf:
    """One class's kernel density: frozen anchors plus bandwidth and prior.

    ``mean`` and ``var`` summarise the source features and are diagnostics
    only; density evaluation never reads them.
    """

    class_label: int
    anchors: np.ndarray  # (n, d)
    bandwidth: float
    prior: float
    mean: np.ndarray = None
    var: np.ndarray = None

    def __post_init__(self):
        anchors = np.array(self.anchors, dtype=np.float64)
        if anchors.ndim != 2:
            raise ShapeError(f"anchors must be an (n, d) matrix, got shape {anchors.shape}")
        if anchors.size == 0:
            raise ContractError(f"class {self.class_label}: anchor set is empty")
        if not np.all(np.isfinite(anchors)):
            raise ContractError(f"class {self.class_label}: non-finite anchor")
        if not 0.0 < self.prior <= 1.0:
            raise ContractError(f"class {self.class_label}: prior {self.prior} not in (0, 1]")
        # h = 0 is allowed for the noise-free degenerate pdf; evaluating it fails in KernelSpec
        if not (self.bandwidth >= 0 and math.isfinite(self.bandwidth)):
            raise ContractError(f"bandwidth must be finite and >= 0, got {self.bandwidth}")
        anchors.setflags(write=False)
        object.__setattr__(self, "anchors", anchors)
        for name in ("mean", "var"):
            val = getattr(self, name)
            if val is not None:
                val = np.array(val, dtype=np.float64).reshape(-1)
                val.setflags(write=False)
                object.__setattr__(self, name, val)

    @property
    def n_anchors(self) -> int:
        return self.anchors.shape[0]

    @property
    def dim(self) -> int:
        return self.anchors.shape[1]

    @property
    def spec(self) -> KernelSpec:
        return KernelSpec(self.dim, self.bandwidth)


def _anchor_log_kernels(pdf: ClassPdf, Z: np.ndarray) -> np.ndarray:
    """Per-anchor log kernels, shape (len(Z), n)."""
    if Z.shape[-1] != pdf.dim:
        raise ShapeError(f"point has dimension {Z.shape[-1]}, pdf has {pdf.dim}")
    diff = Z[:, None, :] - pdf.anchors[None, :, :]
    sq = np.einsum("bnd,bnd->bn", diff, diff)
    return pdf.spec.log_norm - sq / (2.0 * pdf.bandwidth**2)


def pdf_density(pdf: ClassPdf, z) -> float:
    """Mean of K_h(z - z_i) over the anchors."""
    Z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    return float(np.mean(np.exp(_anchor_log_kernels(pdf, Z)[0])))


def log_pdf_density(pdf: ClassPdf, z, clip: float = DEFAULT_CLIP) -> float:
    """log of the class density with each per-anchor log kernel floored at ``clip``."""
    Z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    return float(log_density_matrix(pdf, Z, clip)[0])


def log_density_matrix(pdf: ClassPdf, Z, clip: float = DEFAULT_CLIP, chunk: int = 2048) -> np.ndarray:
    """Clipped log density of every row of ``Z`` (m, d); returns shape (m,).

    Each row is reduced independently, so a row's value does not depend on
    the other rows in the batch.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    out = np.empty(Z.shape[0])
    step = max(1, chunk * 64 // max(pdf.n_anchors, 1))
    log_n = math.log(pdf.n_anchors)
    for lo in range(0, Z.shape[0], step):
        lk = np.maximum(_anchor_log_kernels(pdf, Z[lo : lo + step]), clip)
        out[lo : lo + step] = logsumexp(lk, axis=1) - log_n
    return out
