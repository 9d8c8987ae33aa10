"""GKDE training loss: attract each embedding to its own class density,
repel it from the other classes of the same task.

Per sample with label y::

    loss(z) = -pi_y * k_y(z) + sum_{j != y} w_j * k_j(z)

where k_j is the mean over anchors of exp(max(log K_h(z - a), clip)) and the
repulsion weight w_j is pi_j (``repulsion_prior="per_class"``) or pi_y
(``"anchor_class"``). Anchors at the clip floor pass no gradient.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError
from .kde import DEFAULT_CLIP, KernelSpec


@dataclass
class LossConfig:
    bandwidth: float = 0.5
    clip_threshold: float = DEFAULT_CLIP
    reduction: str = "mean"
    repulsion_prior: str = "per_class"

    def __post_init__(self):
        if not np.isfinite(self.clip_threshold):
            raise ContractError("clip_threshold must be finite")
        if not self.bandwidth > 0:
            raise ContractError("bandwidth must be positive")
        if self.reduction not in ("mean", "sum"):
            raise ContractError(f"unknown reduction {self.reduction!r}")
        if self.repulsion_prior not in ("per_class", "anchor_class"):
            raise ContractError(f"unknown repulsion_prior {self.repulsion_prior!r}")


def class_density(pdf, z: Tensor, h: float, clip: float) -> Tensor:
    """Differentiable k_j(z) for a batch ``z`` (b, d); returns shape (b,)."""
    spec = KernelSpec(z.shape[1], h)
    sq = ad.sq_dist(z, pdf.anchors)
    logk = ad.add(ad.scale(sq, -1.0 / (2.0 * h * h)), spec.log_norm)
    return ad.mean(ad.exp(ad.clip_min(logk, clip)), axis=1)


def loss_coefficients(pdfs, labels, repulsion_prior="per_class") -> np.ndarray:
    """(b, m) signed weights multiplying each class density in the loss."""
    labels = np.asarray(labels).reshape(-1)
    if labels.size == 0:
        raise ContractError("empty batch")
    index = {p.class_label: i for i, p in enumerate(pdfs)}
    unknown = sorted({int(y) for y in labels} - set(index))
    if unknown:
        raise ContractError(f"labels {unknown} have no class pdf in this task")
    priors = np.array([p.prior for p in pdfs])
    rows = np.array([index[int(y)] for y in labels])
    if repulsion_prior == "per_class":
        coef = np.tile(priors, (labels.size, 1))
    else:
        coef = np.repeat(priors[rows][:, None], len(pdfs), axis=1)
    coef[np.arange(labels.size), rows] = -priors[rows]
    return coef


def gkde_loss(pdfs, z_batch: Tensor, labels, config: LossConfig) -> Tensor:
    """Scalar GKDE loss of a batch of embeddings."""
    z_batch = ad.as_tensor(z_batch)
    coef = loss_coefficients(pdfs, labels, config.repulsion_prior)
    if z_batch.shape[0] != coef.shape[0]:
        raise ContractError(f"{z_batch.shape[0]} embeddings but {coef.shape[0]} labels")
    total = None
    for j, pdf in enumerate(pdfs):
        k = class_density(pdf, z_batch, config.bandwidth, config.clip_threshold)
        term = ad.sum_(ad.mul(k, coef[:, j]))
        total = term if total is None else ad.add(total, term)
    if config.reduction == "mean":
        total = ad.scale(total, 1.0 / coef.shape[0])
    return total


def loss_gradient_check(task_data, params, config: LossConfig, step: float = 1e-5) -> float:
    """Worst relative error between taped and central-difference gradients.

    ``task_data`` is ``(x, labels, pdfs)``. Coordinates where both gradients
    are below 1e-8 in magnitude are skipped.
    """
    from .network import embed

    x, labels, pdfs = task_data
    tensors = params.tensors()

    def f():
        return gkde_loss(pdfs, embed(params, x), labels, config).item()

    with ad.Tape() as tape:
        loss = gkde_loss(pdfs, embed(params, x), labels, config)
    analytic = ad.backward(tape, loss, wrt=tensors)
    numeric = ad.finite_difference_gradient(f, tensors, step)
    worst = 0.0
    for t in tensors:
        a, n = analytic[t].ravel(), numeric[t].ravel()
        scale = np.maximum(np.abs(a), np.abs(n))
        mask = scale > 1e-8
        if mask.any():
            worst = max(worst, float(np.max(np.abs(a - n)[mask] / scale[mask])))
    return worst
