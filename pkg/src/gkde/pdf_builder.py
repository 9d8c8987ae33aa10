"""Class priors, noisy anchor generation and ClassPdf assembly."""

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .kde import ClassPdf


@dataclass(frozen=True)
class PriorTable:
    counts: dict  # label -> n_j
    priors: dict  # label -> n_j / n

    @property
    def labels(self) -> list:
        return sorted(self.counts)


def estimate_priors(labels) -> PriorTable:
    """Relative class frequencies of a task's training labels."""
    labels = [int(y) for y in np.asarray(labels).reshape(-1)]
    if not labels:
        raise ContractError("cannot estimate priors from an empty label list")
    counts = dict(sorted(Counter(labels).items()))
    total = len(labels)
    return PriorTable(counts, {j: c / total for j, c in counts.items()})


def generate_anchors(features, n, h, rng, replace=True) -> np.ndarray:
    """Draw ``n`` source rows and add N(0, h^2) noise per coordinate.

    Rows are drawn uniformly with replacement. ``replace=False`` draws without
    replacement when ``n`` does not exceed the number of source rows (with
    ``h=0`` this reproduces a permutation of the features) and falls back to
    replacement otherwise.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise ContractError("generate_anchors needs a non-empty (N, d) feature matrix")
    if n < 1:
        raise ContractError("anchor count must be >= 1")
    if h < 0:
        raise ContractError("noise bandwidth must be >= 0")
    rng = np.random.default_rng(rng)
    without = not replace and n <= features.shape[0]
    idx = rng.choice(features.shape[0], size=n, replace=not without)
    noise = rng.standard_normal((n, features.shape[1]))
    return features[idx] + h * noise


def build_class_pdf(embedded_features, label, prior, n, h, seed, replace=True) -> ClassPdf:
    feats = np.asarray(embedded_features, dtype=np.float64)
    anchors = generate_anchors(feats, n, h, seed, replace=replace)
    return ClassPdf(
        class_label=int(label),
        anchors=anchors,
        bandwidth=float(h),
        prior=float(prior),
        mean=feats.mean(axis=0),
        var=feats.var(axis=0),
    )


def seed_sequence(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def build_task_pdfs(Z, labels, n, h, seed, replace=True) -> list:
    """One ClassPdf per distinct label, ordered by label.

    Each class draws from its own child of ``seed`` so classes are independent
    of each other's sizes.
    """
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    table = estimate_priors(labels)
    children = seed_sequence(seed).spawn(len(table.labels))
    return [
        build_class_pdf(Z[labels == j], j, table.priors[j], n, h, np.random.default_rng(ss), replace)
        for j, ss in zip(table.labels, children)
    ]
