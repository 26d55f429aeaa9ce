"""Adaptive-bandwidth Gaussian kernel density estimation."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid

from config.defaults import KDE_GRID_POINTS, KDE_PAD_BANDWIDTHS
from core.errors import InsufficientDataError


@dataclass(frozen=True)
class AdaptiveKde:
    """Density with per-point bandwidths; `grid`/`density`/`cdf_grid` are its tabulation."""

    samples: np.ndarray
    bandwidths: np.ndarray
    pilot_bandwidth: float
    grid: np.ndarray
    density: np.ndarray
    cdf_grid: np.ndarray

    def pdf(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        z = (x[:, None] - self.samples[None, :]) / self.bandwidths[None, :]
        return np.mean(stats.norm.pdf(z) / self.bandwidths[None, :], axis=1)

    def cdf(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        z = (x[:, None] - self.samples[None, :]) / self.bandwidths[None, :]
        return np.mean(stats.norm.cdf(z), axis=1)

    def local_maxima(self) -> np.ndarray:
        d = self.density
        peaks = np.flatnonzero((d[1:-1] > d[:-2]) & (d[1:-1] >= d[2:])) + 1
        return self.grid[peaks]


def _pilot(samples: np.ndarray):
    """Fixed-bandwidth Silverman pilot: (bandwidth, density at the samples)."""
    spread = np.std(samples, ddof=1)
    if spread > 0:
        try:
            kde = stats.gaussian_kde(samples, bw_method="silverman")
            h = float(kde.factor * spread)
            return h, kde(samples)
        except np.linalg.LinAlgError:
            pass
    # all samples (numerically) equal: a narrow kernel around the common value
    h = 1e-3 * max(1.0, float(np.max(np.abs(samples))))
    return h, np.full(len(samples), 1.0 / h)


def adaptive_kde(samples: Sequence[float], grid: Optional[np.ndarray] = None,
                 grid_points: int = KDE_GRID_POINTS,
                 pad: float = KDE_PAD_BANDWIDTHS) -> AdaptiveKde:
    """Pilot Silverman KDE, then bandwidths h * (pilot(x_k) / geometric mean)^(-1/2)."""
    data = np.asarray(samples, dtype=float)
    if data.size < 2:
        raise InsufficientDataError(f"adaptive KDE needs >= 2 samples, got {data.size}")

    h, pilot_values = _pilot(data)
    pilot_values = np.maximum(pilot_values, np.finfo(float).tiny)
    geometric_mean = np.exp(np.mean(np.log(pilot_values)))
    lam = (pilot_values / geometric_mean) ** -0.5
    bandwidths = h * lam

    if grid is None:
        grid = np.linspace(data.min() - pad * h, data.max() + pad * h, grid_points)
    kde = AdaptiveKde(data, bandwidths, h, grid, np.empty(0), np.empty(0))
    density = kde.pdf(grid)
    area = trapezoid(density, grid)
    if area > 0:
        density = density / area
    return AdaptiveKde(data, bandwidths, h, grid, density, kde.cdf(grid))
