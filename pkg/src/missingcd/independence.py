"""(Conditional) independence tests on test-wise deleted, optionally reweighted data.

The marginal test is HSIC with Gaussian kernels (delta kernel for binary
indicators).  Conditional tests regress both variables on the conditioning set
and run HSIC on the residual pair.  A Fisher-z partial correlation test is
available for linear-Gaussian data, and ``oracle_ci_test`` answers from
d-separation in a known graph.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .data import Dataset, EmptyAfterDeletion
from .graph import MGraph, d_separated
from .kernels import (
    as_matrix,
    delta_features,
    delta_gram,
    fourier_features,
    fourier_frequencies,
    gaussian_gram,
    median_bandwidth,
    standardize,
)
from .regression import default_feature_count, fit_kernel_ridge


class InsufficientData(ValueError):
    """Fewer usable rows than ``TestConfig.min_effective_n``."""


@dataclass(frozen=True)
class TestConfig:
    """Settings shared by every test.

    ``bandwidth=None`` selects the median heuristic; ``permutations=None`` selects
    the gamma approximation of the null distribution.  Samples larger than
    ``exact_max_n`` use ``n_features`` random Fourier features instead of full
    Gram matrices.
    """

    __test__ = False  # not a pytest class

    alpha: float = 0.01
    bandwidth: float | None = None
    permutations: int | None = None
    min_effective_n: int = 30
    method: str = "hsic"
    exact_max_n: int = 1000
    n_features: int = 40
    regression_features: int = 72
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.permutations is not None and self.permutations < 100:
            raise ValueError("at least 100 permutations are required")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.method not in ("hsic", "fisherz"):
            raise ValueError(f"unknown test method {self.method!r}")
        if self.min_effective_n < 4:
            raise ValueError("min_effective_n must be at least 4")


@dataclass(frozen=True)
class CITestOutcome:
    statistic: float
    p_value: float
    independent: bool
    effective_n: int
    weights_used: bool
    alpha: float
    bandwidth: tuple[float, float] = (float("nan"), float("nan"))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["bandwidth"] = list(self.bandwidth)
        return out


def _probabilities(n: int, weights: np.ndarray | None) -> tuple[np.ndarray, bool]:
    if weights is None:
        return np.full(n, 1.0 / n), False
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError("one weight per sample required")
    if np.any(w < 0) or not np.any(w > 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite, nonnegative and not all zero")
    if np.all(w == w[0]):
        # equal weights must reproduce the unweighted statistic bit for bit
        return np.full(n, 1.0 / n), True
    return w / w.sum(), True


def _center_gram(k: np.ndarray, p: np.ndarray) -> np.ndarray:
    kp = k @ p
    return k - kp[:, None] - kp[None, :] + p @ kp


def _gram_moments(kc: np.ndarray, lc: np.ndarray, p: np.ndarray):
    pp = np.outer(p, p)
    hsic = float(np.sum(pp * kc * lc))
    tr = (float(p @ np.diag(kc)), float(p @ np.diag(lc)))
    fro = (float(np.sum(pp * kc * kc)), float(np.sum(pp * lc * lc)))
    return hsic, tr, fro


def _feature_moments(fx: np.ndarray, fy: np.ndarray, p: np.ndarray):
    p32 = p.astype(np.float32)
    sp = np.sqrt(p32)[:, None]
    fx = (fx - p32 @ fx) * sp
    fy = (fy - p32 @ fy) * sp
    cxy = (fx.T @ fy).astype(np.float64)
    cxx = (fx.T @ fx).astype(np.float64)
    cyy = (fy.T @ fy).astype(np.float64)
    hsic = float(np.sum(cxy * cxy))
    tr = (float(np.trace(cxx)), float(np.trace(cyy)))
    fro = (float(np.sum(cxx * cxx)), float(np.sum(cyy * cyy)))
    return hsic, tr, fro


def _gram_null(kc: np.ndarray, lc: np.ndarray, q: np.ndarray):
    """Null mean and variance terms with squared-probability weights ``q``."""
    diag = float(q @ (np.diag(kc) * np.diag(lc)))
    return diag, (float(q @ (kc * kc) @ q), float(q @ (lc * lc) @ q))


def _feature_null(fx: np.ndarray, fy: np.ndarray, p: np.ndarray, q: np.ndarray):
    gx = (fx - p @ fx).astype(np.float64)
    gy = (fy - p @ fy).astype(np.float64)
    diag = float(q @ ((gx * gx).sum(1) * (gy * gy).sum(1)))
    ax = (gx * q[:, None]).T @ gx
    ay = (gy * q[:, None]).T @ gy
    return diag, (float(np.sum(ax * ax)), float(np.sum(ay * ay)))


def _gamma_sf(stat: float, mean: float, var: float) -> float:
    if mean <= 0 or var <= 0:
        return 1.0
    return float(stats.gamma.sf(stat, mean * mean / var, scale=var / mean))


def _gamma_pvalue(stat: float, n_eff: float, tr, fro) -> float:
    # null of n*HSIC is a weighted sum of chi-squares; match its first two moments
    mean = tr[0] * tr[1] * n_eff / max(n_eff - 1.0, 1.0)
    return _gamma_sf(stat, mean, 2.0 * fro[0] * fro[1])


def _weighted_gamma_pvalue(stat: float, n_eff: float, diag: float, fro) -> float:
    # unequal weights: the diagonal and Frobenius terms are weighted by p_i**2, so
    # large weights on rows with large centered kernel values widen the null
    mean = n_eff * diag * n_eff / max(n_eff - 1.0, 1.0)
    return _gamma_sf(stat, mean, 2.0 * n_eff**4 * fro[0] * fro[1])


def hsic_statistic(x: np.ndarray, y: np.ndarray, sigma_x: float, sigma_y: float) -> float:
    """Biased HSIC ``trace(K H L H) / n**2`` with Gaussian kernels."""
    n = as_matrix(x).shape[0]
    h = np.eye(n) - 1.0 / n
    k = gaussian_gram(x, sigma_x)
    l = gaussian_gram(y, sigma_y)
    return float(np.trace(k @ h @ l @ h)) / n**2


def hsic_test(
    x: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray | None = None,
    cfg: TestConfig = TestConfig(),
    *,
    delta_x: bool = False,
    delta_y: bool = False,
    seed: int | Sequence[int] | None = None,
) -> CITestOutcome:
    """HSIC independence test between samples ``x`` and ``y``.

    ``statistic`` is the (weighted) biased HSIC estimate.  ``delta_x``/``delta_y``
    switch that side to the delta kernel, used for binary indicators.
    """
    x = as_matrix(x)
    y = as_matrix(y)
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError("x and y differ in length")
    if n < cfg.min_effective_n:
        raise InsufficientData(f"{n} samples, need {cfg.min_effective_n}")
    p, weighted = _probabilities(n, weights)
    unequal = bool(np.any(p != p[0]))
    n_eff = 1.0 / float(p @ p)
    eff_n = min(n, int(np.floor(n_eff + 1e-9)))
    if np.ptp(x, axis=0).max() == 0 or np.ptp(y, axis=0).max() == 0:
        return CITestOutcome(0.0, 1.0, True, eff_n, weighted, cfg.alpha)

    def prep(v: np.ndarray, delta: bool) -> tuple[np.ndarray, float]:
        if delta:
            return v, float("nan")
        v = standardize(v)
        return v, cfg.bandwidth if cfg.bandwidth is not None else median_bandwidth(v)

    xs, sx = prep(x, delta_x)
    ys, sy = prep(y, delta_y)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)

    if n <= cfg.exact_max_n:
        k = delta_gram(xs) if delta_x else gaussian_gram(xs, sx)
        l = delta_gram(ys) if delta_y else gaussian_gram(ys, sy)
        kc = _center_gram(k, p)
        lc = _center_gram(l, p)
        hsic, tr, fro = _gram_moments(kc, lc, p)
        null = _gram_null(kc, lc, p * p) if unequal else None

        def permuted(perm: np.ndarray) -> float:
            return _gram_moments(kc, _center_gram(l[np.ix_(perm, perm)], p), p)[0]

    else:
        # same frequencies on both sides keeps the statistic symmetric in (x, y)
        dim = max(xs.shape[1], ys.shape[1])
        omega = fourier_frequencies(dim, cfg.n_features, rng)
        f32 = np.float32
        fx = delta_features(xs).astype(f32) if delta_x else fourier_features(xs, sx, omega[: xs.shape[1]], f32)
        fy = delta_features(ys).astype(f32) if delta_y else fourier_features(ys, sy, omega[: ys.shape[1]], f32)
        hsic, tr, fro = _feature_moments(fx, fy, p)
        null = _feature_null(fx, fy, p, p * p) if unequal else None

        def permuted(perm: np.ndarray) -> float:
            return _feature_moments(fx, fy[perm], p)[0]

    stat = n_eff * hsic
    if cfg.permutations is None and null is not None:
        pval = _weighted_gamma_pvalue(stat, n_eff, *null)
    elif cfg.permutations is None:
        pval = _gamma_pvalue(stat, n_eff, tr, fro)
    else:
        exceed = sum(n_eff * permuted(rng.permutation(n)) >= stat for _ in range(cfg.permutations))
        pval = (1 + exceed) / (1 + cfg.permutations)
    return CITestOutcome(hsic, pval, pval > cfg.alpha, eff_n, weighted, cfg.alpha, (sx, sy))


def fisher_z_test(
    x: np.ndarray,
    y: np.ndarray,
    z: np.ndarray | None = None,
    weights: np.ndarray | None = None,
    cfg: TestConfig = TestConfig(),
) -> CITestOutcome:
    """Partial-correlation test for linear-Gaussian data."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n = x.shape[0]
    if n < cfg.min_effective_n:
        raise InsufficientData(f"{n} samples, need {cfg.min_effective_n}")
    p, weighted = _probabilities(n, weights)
    n_eff = 1.0 / float(p @ p)
    k = 0 if z is None else as_matrix(z).shape[1]
    design = np.ones((n, 1)) if z is None else np.hstack([np.ones((n, 1)), as_matrix(z)])
    sw = np.sqrt(p)
    res = []
    for v in (x, y):
        beta, *_ = np.linalg.lstsq(design * sw[:, None], v * sw, rcond=None)
        res.append(v - design @ beta)
    rx, ry = res
    denom = np.sqrt((p @ (rx * rx)) * (p @ (ry * ry)))
    eff_n = min(n, int(np.floor(n_eff + 1e-9)))
    if denom == 0:
        return CITestOutcome(0.0, 1.0, True, eff_n, weighted, cfg.alpha)
    r = float(np.clip((p @ (rx * ry)) / denom, -0.999999, 0.999999))
    zstat = np.sqrt(max(n_eff - k - 3, 1.0)) * np.arctanh(r)
    pval = float(2 * stats.norm.sf(abs(zstat)))
    return CITestOutcome(abs(float(zstat)), pval, pval > cfg.alpha, eff_n, weighted, cfg.alpha)


def _seed_for(cfg: TestConfig, x: int, y: int, z: Iterable[int], tag: int = 0) -> tuple[int, ...]:
    a, b = sorted((x, y))
    return (cfg.seed, tag, a, b, *sorted(z))


def residualize(
    values: np.ndarray,
    target: int,
    z: Sequence[int],
    weights: np.ndarray | None,
    cfg: TestConfig,
) -> np.ndarray:
    """Residual of column ``target`` after kernel ridge regression on columns ``z``."""
    _, resid = fit_kernel_ridge(
        values[:, list(z)],
        values[:, target],
        weights,
        seed=(cfg.seed, 1, target, *sorted(z)),
        n_features=default_feature_count(len(z), cfg.regression_features),
        return_residuals=True,
    )
    return resid


def _resolve(d: Dataset, c: int | str) -> int:
    return d.column(c) if isinstance(c, str) else int(c)


def ci_test(
    d: Dataset,
    x: int | str,
    y: int | str,
    z: Iterable[int | str] = (),
    weights: np.ndarray | None = None,
    cfg: TestConfig = TestConfig(),
) -> CITestOutcome:
    """Test ``x`` independent of ``y`` given ``z`` on rows where all of them are observed.

    ``weights`` (one per retained row) reweight both the regressions and HSIC.
    """
    x, y = _resolve(d, x), _resolve(d, y)
    z = sorted({_resolve(d, c) for c in z})
    if x == y or x in z or y in z:
        raise ValueError("x, y and z must be disjoint")
    rows = d.observed_rows((x, y, *z))
    if not rows.any():
        raise EmptyAfterDeletion("no rows with x, y and z all observed")
    vals = d.values[rows]
    if weights is not None and len(weights) != vals.shape[0]:
        raise ValueError("one weight per retained row required")
    if vals.shape[0] < cfg.min_effective_n:
        raise InsufficientData(f"{vals.shape[0]} complete rows, need {cfg.min_effective_n}")
    if cfg.method == "fisherz":
        return fisher_z_test(vals[:, x], vals[:, y], vals[:, z] if z else None, weights, cfg)
    if not z:
        return hsic_test(vals[:, x], vals[:, y], weights, cfg, seed=_seed_for(cfg, x, y, z))
    rx = residualize(vals, x, z, weights, cfg)
    ry = residualize(vals, y, z, weights, cfg)
    return hsic_test(rx, ry, weights, cfg, seed=_seed_for(cfg, x, y, z))


def smooth_transforms(v: np.ndarray) -> np.ndarray:
    """Standardized ``v`` with four bounded periodic functions of it, as columns."""
    s = standardize(v)[:, 0]
    return np.column_stack([s, np.cos(s), np.sin(s), np.cos(2.0 * s), np.sin(2.0 * s)])


def residualize_transforms(values: np.ndarray, target: int, z: Sequence[int], cfg: TestConfig) -> np.ndarray:
    """Residuals of ``smooth_transforms`` of column ``target`` regressed on columns ``z``."""
    _, resid = fit_kernel_ridge(
        values[:, list(z)],
        smooth_transforms(values[:, target]),
        None,
        seed=(cfg.seed, 4, target, *sorted(z)),
        n_features=default_feature_count(len(z), cfg.regression_features),
        return_residuals=True,
    )
    return resid


def gcm_test(r: np.ndarray, s: np.ndarray, cfg: TestConfig = TestConfig()) -> CITestOutcome:
    """Generalized covariance test that every product ``r * s[:, k]`` has mean zero.

    ``r`` and the columns of ``s`` are regression residuals on a common
    conditioning set.  The statistic ``n * m' C^+ m`` (``m`` the mean products,
    ``C`` their covariance) is referred to a chi-square with ``rank(C)`` degrees
    of freedom.  Unlike HSIC on residuals, this stays calibrated when the
    residual spread depends on the conditioning set, as it does for a binary ``r``.
    """
    r = np.asarray(r, dtype=float).ravel()
    s = as_matrix(s)
    n = r.shape[0]
    if s.shape[0] != n:
        raise ValueError("r and s differ in length")
    if n < cfg.min_effective_n:
        raise InsufficientData(f"{n} samples, need {cfg.min_effective_n}")
    prod = r[:, None] * s
    mean = prod.mean(axis=0)
    cov = np.atleast_2d(np.cov(prod, rowvar=False, bias=True))
    df = int(np.linalg.matrix_rank(cov, hermitian=True)) if np.abs(cov).max() > 0 else 0
    if df == 0:
        return CITestOutcome(0.0, 1.0, True, n, False, cfg.alpha)
    stat = float(n * mean @ np.linalg.pinv(cov, hermitian=True) @ mean)
    pval = float(stats.chi2.sf(stat, df))
    return CITestOutcome(stat, pval, pval > cfg.alpha, n, False, cfg.alpha)


def indicator_ci_test(
    d: Dataset,
    r: int | str,
    v: int | str,
    z: Iterable[int | str] = (),
    cfg: TestConfig = TestConfig(),
) -> CITestOutcome:
    """Test the missingness indicator of column ``r`` against column ``v`` given ``z``.

    Rows are restricted to those where ``v`` and ``z`` are observed; the indicator
    itself is always observed.
    """
    r, v = _resolve(d, r), _resolve(d, v)
    z = sorted({_resolve(d, c) for c in z})
    if v == r or r in z or v in z:
        raise ValueError("indicator variable, v and z must be disjoint")
    rows = d.observed_rows((v, *z))
    if not rows.any():
        raise EmptyAfterDeletion("no rows with v and z observed")
    vals = d.values[rows]
    ind = d.mask[rows, r].astype(float)
    if vals.shape[0] < cfg.min_effective_n:
        raise InsufficientData(f"{vals.shape[0]} complete rows, need {cfg.min_effective_n}")
    seed = _seed_for(cfg, r, v, z, tag=2)
    if cfg.method == "fisherz":
        return fisher_z_test(ind, vals[:, v], vals[:, z] if z else None, None, cfg)
    if not z:
        return hsic_test(ind, vals[:, v], None, cfg, delta_x=True, seed=seed)
    aug = np.column_stack([vals, ind])
    rr = residualize(aug, aug.shape[1] - 1, z, None, cfg)
    rt = residualize_transforms(vals, v, z, cfg)
    return gcm_test(rr, rt, cfg)


def oracle_ci_test(g: MGraph, x: int, y: int, z: Iterable[int] = (), alpha: float = 0.01) -> CITestOutcome:
    """Answer from d-separation in ``g``: p-value 1 if separated, else 0."""
    sep = d_separated(g, x, y, frozenset(z))
    return CITestOutcome(float(not sep), 1.0 if sep else 0.0, sep, 0, False, alpha)
