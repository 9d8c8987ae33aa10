"""Bias and variance of the Gaussian KDE: leading-order predictions against
Monte-Carlo measurements.

For a scalar bandwidth h the leading terms are

    bias(z)     ~ 0.5 * mu_2(K) * h^2 * laplacian k(z)
    variance(z) ~ R(K) * k(z) / (n * h^d)

and the Monte-Carlo side builds the plain KDE from i.i.d. draws of the true
density (no anchor noise).
"""

from dataclasses import dataclass
import csv
import io
import math
from typing import Callable

import numpy as np

from .kde import ClassPdf, gaussian_constants, pdf_density
from .pdf_builder import seed_sequence

REPORT_COLUMNS = [
    "z", "h", "n", "predicted_bias", "measured_bias", "se_bias", "predicted_var", "measured_var", "regime_ok",
]


@dataclass(frozen=True)
class TestDensity:
    name: str
    dim: int
    pdf: Callable  # (m, d) -> (m,)
    laplacian: Callable  # (m, d) -> (m,)
    sampler: Callable  # (rng, count) -> (count, d)


def standard_normal(dim: int = 1) -> TestDensity:
    c = (2.0 * math.pi) ** (-dim / 2.0)

    def pdf(Z):
        Z = np.atleast_2d(Z)
        return c * np.exp(-0.5 * np.sum(Z * Z, axis=1))

    def laplacian(Z):
        Z = np.atleast_2d(Z)
        r2 = np.sum(Z * Z, axis=1)
        return pdf(Z) * (r2 - dim)

    return TestDensity(f"normal{dim}d", dim, pdf, laplacian, lambda rng, m: rng.standard_normal((m, dim)))


def gaussian_mixture_1d(weights=(0.5, 0.5), means=(-2.0, 2.0), std=1.0) -> TestDensity:
    w, mu = np.asarray(weights, float), np.asarray(means, float)

    def comps(Z):
        u = (np.atleast_2d(Z)[:, :1] - mu[None, :]) / std
        return u, np.exp(-0.5 * u * u) / (std * math.sqrt(2.0 * math.pi))

    def pdf(Z):
        return comps(Z)[1] @ w

    def laplacian(Z):
        u, phi = comps(Z)
        return (phi * (u * u - 1.0) / std**2) @ w

    def sampler(rng, m):
        k = rng.choice(len(w), size=m, p=w / w.sum())
        return (mu[k] + std * rng.standard_normal(m))[:, None]

    return TestDensity("mixture1d", 1, pdf, laplacian, sampler)


def _point(density, z):
    return np.asarray(z, dtype=np.float64).reshape(1, density.dim)


def predicted_bias(density: TestDensity, z, h: float) -> float:
    mu2 = gaussian_constants(density.dim).second_moment
    return 0.5 * mu2 * h * h * float(density.laplacian(_point(density, z))[0])


def predicted_variance(density: TestDensity, z, h: float, n: int) -> float:
    R = gaussian_constants(density.dim).roughness
    return R * float(density.pdf(_point(density, z))[0]) / (n * h**density.dim)


def exact_normal_moments(dim: int, z, h: float, n: int) -> tuple:
    """Exact finite-h bias and variance of the Gaussian KDE for a standard
    normal target, with no asymptotic expansion.

    E K_h(z - X) is the N(0, (1 + h^2) I) density at z, and
    E K_h(z - X)^2 = (4 pi h^2)^(-d/2) times the N(0, (1 + h^2 / 2) I) density.
    The variance is (E K^2 - (E K)^2) / n, so it keeps the -k^2/n term that
    the leading-order formula drops.
    """
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    r2 = float(z @ z)

    def normal(s2):
        return (2.0 * math.pi * s2) ** (-dim / 2.0) * math.exp(-0.5 * r2 / s2)

    m1 = normal(1.0 + h * h)
    m2 = (4.0 * math.pi * h * h) ** (-dim / 2.0) * normal(1.0 + 0.5 * h * h)
    return m1 - normal(1.0), (m2 - m1 * m1) / n


def regime_ok(h: float, n: int) -> bool:
    """False outside the small-h, large-n*h range where the leading terms apply."""
    return not (h > 1.0 or n * h < 50.0)


@dataclass(frozen=True)
class BiasVarianceReport:
    z: tuple
    h: float
    n: int
    replications: int
    predicted_bias: float
    predicted_variance: float
    measured_bias: float
    measured_variance: float
    se_bias: float
    se_variance: float
    asymptotic_regime: bool


def kde_estimates(density: TestDensity, z, h: float, n: int, replications: int, seed) -> np.ndarray:
    """KDE value at ``z`` for each of ``replications`` independent size-``n`` samples."""
    z = _point(density, z)[0]
    children = seed_sequence(seed).spawn(replications)
    out = np.empty(replications)
    for r, ss in enumerate(children):
        sample = density.sampler(np.random.default_rng(ss), n)
        out[r] = pdf_density(ClassPdf(-1, sample, h, 1.0), z)
    return out


def monte_carlo_bias_variance(density: TestDensity, z, h: float, n: int, replications: int = 2000, seed=0) -> BiasVarianceReport:
    if replications < 100:
        raise ValueError("at least 100 replications are needed for stable standard errors")
    est = kde_estimates(density, z, h, n, replications, seed)
    truth = float(density.pdf(_point(density, z))[0])
    R = replications
    var = float(np.var(est, ddof=1))
    dev = est - est.mean()
    m4 = float(np.mean(dev**4))
    se_var = math.sqrt(max(m4 - (R - 3) / (R - 1) * var * var, 0.0) / R)
    return BiasVarianceReport(
        z=tuple(float(v) for v in _point(density, z)[0]),
        h=h,
        n=n,
        replications=R,
        predicted_bias=predicted_bias(density, z, h),
        predicted_variance=predicted_variance(density, z, h, n),
        measured_bias=float(est.mean()) - truth,
        measured_variance=var,
        se_bias=math.sqrt(var / R),
        se_variance=se_var,
        asymptotic_regime=regime_ok(h, n),
    )


def loglog_slope(x, y) -> float:
    """Least-squares slope of log|y| against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.abs(np.asarray(y, float))), 1)[0])


def sweep(density: TestDensity, z, hs, ns, replications=2000, seed=0) -> list:
    """One report per (h, n); each cell gets its own child seed."""
    cells = [(h, n) for h in hs for n in ns]
    children = seed_sequence(seed).spawn(len(cells))
    return [monte_carlo_bias_variance(density, z, h, n, replications, ss) for (h, n), ss in zip(cells, children)]


def report_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        w.writerow([
            ";".join(repr(v) for v in r.z),
            repr(r.h),
            r.n,
            f"{r.predicted_bias:.9e}",
            f"{r.measured_bias:.9e}",
            f"{r.se_bias:.9e}",
            f"{r.predicted_variance:.9e}",
            f"{r.measured_variance:.9e}",
            str(r.asymptotic_regime).lower(),
        ])
    return buf.getvalue()
