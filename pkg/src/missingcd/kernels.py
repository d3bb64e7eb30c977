"""Gaussian and delta kernels, median-heuristic bandwidth and random Fourier features."""

from __future__ import annotations

import numpy as np

# rows used for the median heuristic; pairwise distances beyond this are wasted work
_MEDIAN_MAX_ROWS = 200


def as_matrix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def standardize(x: np.ndarray) -> np.ndarray:
    x = as_matrix(x)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    return (x - x.mean(axis=0)) / sd


def sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


def median_bandwidth(x: np.ndarray) -> float:
    """Median pairwise Euclidean distance over at most 200 evenly spaced rows."""
    x = as_matrix(x)
    n = x.shape[0]
    if n > _MEDIAN_MAX_ROWS:
        x = x[np.linspace(0, n - 1, _MEDIAN_MAX_ROWS).astype(int)]
    # the full matrix repeats each pair twice, which leaves the median unchanged
    d = sq_dists(x, x).ravel()
    d = d[d > 0]
    if d.size == 0:
        return 1.0
    return float(np.sqrt(np.median(d)))


def gaussian_gram(x: np.ndarray, sigma: float) -> np.ndarray:
    x = as_matrix(x)
    return np.exp(-sq_dists(x, x) / (2.0 * sigma * sigma))


def delta_gram(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x).ravel()
    return (x[:, None] == x[None, :]).astype(float)


def delta_features(x: np.ndarray) -> np.ndarray:
    """One-hot encoding; its inner products are exactly the delta kernel."""
    x = np.asarray(x).ravel()
    levels = np.unique(x)
    return (x[:, None] == levels[None, :]).astype(float)


def fourier_frequencies(dim: int, n_features: int, rng: np.random.Generator) -> np.ndarray:
    """Standard normal frequencies for ``n_features`` cos/sin pairs."""
    return rng.standard_normal((dim, n_features // 2))


def fourier_features(x: np.ndarray, sigma: float, omega: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Random Fourier features of the Gaussian kernel with bandwidth ``sigma``."""
    # single precision trig is an order of magnitude faster and accurate enough here
    proj = (as_matrix(x) @ (omega / sigma)).astype(np.float32)
    out = np.empty((proj.shape[0], 2 * proj.shape[1]), dtype=dtype)
    k = proj.shape[1]
    out[:, :k] = np.cos(proj)
    out[:, k:] = np.sin(proj)
    out *= np.sqrt(1.0 / k)
    return out
