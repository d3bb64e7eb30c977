"""Gaussian-kernel ridge regression used for residual-based tests.

The kernel is approximated by random Fourier features (plus the raw standardized
inputs), which keeps the cost linear in the number of rows.  The ridge penalty is
picked from a small grid on a held-out fold, then the model is refit on all rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset
from .kernels import as_matrix, fourier_features, fourier_frequencies, median_bandwidth

RIDGE_GRID = (1e-4, 1e-3, 1e-2, 1e-1)
HOLDOUT_FRACTION = 0.2


class InsufficientRows(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KernelRidge:
    """A fitted regression function on standardized inputs."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    sigma: float
    omega: np.ndarray
    coef: np.ndarray
    f_mean: np.ndarray
    y_mean: float | np.ndarray
    ridge: float
    constant: bool = False

    def _features(self, x: np.ndarray) -> np.ndarray:
        xs = (as_matrix(x) - self.x_mean) / self.x_scale
        return np.hstack([fourier_features(xs, self.sigma, self.omega), xs])

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = as_matrix(x)
        if self.constant:
            return np.tile(self.y_mean, (x.shape[0], 1)) if np.ndim(self.y_mean) else np.full(x.shape[0], self.y_mean)
        return (self._features(x) - self.f_mean) @ self.coef + self.y_mean

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "ridge": self.ridge,
            "n_features": int(self.omega.shape[1] * 2),
            "constant": self.constant,
        }


def _ridge_solutions(gram: np.ndarray, rhs: np.ndarray, grid: Sequence[float]) -> list[np.ndarray]:
    s, v = np.linalg.eigh(gram)
    s = np.maximum(s, 0.0)
    proj = v.T @ rhs
    return [v @ (proj / (s + lam)[:, None]) for lam in grid]


def _moments(f: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Weighted sums needed for a centered ridge fit: total weight, means, Gram, cross term."""
    sw = w.sum()
    fw = f * w[:, None]
    return sw, fw.sum(0), w @ y, fw.T @ f, fw.T @ y


def _centered(m) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    sw, sf, sy, ff, fy = m
    fm = sf / sw
    ym = sy / sw
    gram = ff / sw - np.outer(fm, fm)
    rhs = fy / sw - np.outer(fm, ym)
    return gram, rhs, fm, ym


def default_feature_count(dim: int, cap: int = 100) -> int:
    """Random features for ``dim`` inputs: 24 per dimension, at most ``cap``, even."""
    return max(2, min(cap, 24 * dim)) // 2 * 2


def fit_kernel_ridge(
    x: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray | None = None,
    seed: int | Sequence[int] = 0,
    n_features: int = 100,
    grid: Sequence[float] = RIDGE_GRID,
    return_residuals: bool = False,
):
    """Fit ``y ~ f(x)``; ``weights`` make the fit target the reweighted distribution.

    ``y`` may hold several outputs as columns; they share the features and the
    ridge penalty.  With ``return_residuals`` the training residuals are returned
    alongside the model.
    """
    x = as_matrix(x)
    y = np.asarray(y, dtype=float)
    multi = y.ndim == 2
    ys = y if multi else y[:, None]
    n = x.shape[0]
    if ys.shape[0] != n:
        raise ValueError("x and y differ in length")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    x_mean = x.mean(axis=0)
    x_scale = x.std(axis=0)
    x_scale[x_scale == 0] = 1.0
    rng = np.random.default_rng(seed)
    omega = fourier_frequencies(x.shape[1], n_features, rng)

    def out(model: KernelRidge, resid: np.ndarray):
        resid = resid if multi else resid[:, 0]
        return (model, resid) if return_residuals else model

    if np.ptp(ys, axis=0).max() == 0:
        level = ys[0] if multi else float(ys[0, 0])
        model = KernelRidge(x_mean, x_scale, 1.0, omega, np.zeros(0), np.zeros(0), level, 0.0, True)
        return out(model, np.zeros_like(ys))
    xs = (x - x_mean) / x_scale
    sigma = median_bandwidth(xs)
    f = np.hstack([fourier_features(xs, sigma, omega), xs])
    full = _moments(f, ys, w)

    ridge = grid[0]
    if len(grid) > 1 and n >= 10:
        order = rng.permutation(n)
        hold = order[: max(1, int(round(HOLDOUT_FRACTION * n)))]
        part = _moments(f[hold], ys[hold], w[hold])
        # training-fold sums are the full sums minus the held-out ones
        train = tuple(a - b for a, b in zip(full, part))
        gram, rhs, fm, ym = _centered(train)
        coefs = _ridge_solutions(gram, rhs, grid)
        errs = [float(w[hold] @ (((f[hold] - fm) @ c + ym - ys[hold]) ** 2).sum(1)) for c in coefs]
        ridge = grid[int(np.argmin(errs))]
    gram, rhs, f_mean, y_mean = _centered(full)
    coef = _ridge_solutions(gram, rhs, [ridge])[0]
    resid = ys - ((f - f_mean) @ coef + y_mean)
    if not multi:
        coef, y_mean = coef[:, 0], float(y_mean[0])
    return out(KernelRidge(x_mean, x_scale, sigma, omega, coef, f_mean, y_mean, ridge), resid)


@dataclass(frozen=True, eq=False)
class Regressor:
    """A regression of one dataset column on others."""

    inputs: tuple[int, ...]
    output: int
    model: KernelRidge
    train_residual_variance: float
    rows: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.model.predict(x)

    def residuals(self, d: Dataset) -> np.ndarray:
        """Residuals on the rows of ``d`` where output and inputs are observed."""
        sub = d.values[d.observed_rows((self.output, *self.inputs))]
        return sub[:, self.output] - self.model.predict(sub[:, list(self.inputs)])


def fit_regressor(
    d: Dataset,
    output: int,
    inputs: Sequence[int],
    seed: int = 0,
    min_rows: int = 30,
    n_features: int = 100,
    weights: np.ndarray | None = None,
) -> Regressor:
    """Regress column ``output`` on ``inputs`` over the test-wise deleted rows."""
    inputs = tuple(sorted(set(int(i) for i in inputs)))
    if not inputs:
        raise ValueError("regression needs at least one input column")
    if output in inputs:
        raise ValueError("output column listed among inputs")
    rows = np.flatnonzero(d.observed_rows((output, *inputs)))
    if rows.size < min_rows:
        raise InsufficientRows(f"{rows.size} complete rows, need {min_rows}")
    if weights is not None and len(weights) != rows.size:
        raise ValueError("one weight per retained row required")
    x = d.values[np.ix_(rows, inputs)]
    y = d.values[rows, output]
    model, resid = fit_kernel_ridge(
        x, y, weights, seed=(seed, output, *inputs), n_features=n_features, return_residuals=True
    )
    return Regressor(inputs, output, model, float(resid.var()), rows)
