"""Two-sample test: linear-time MMD terms fed to an empirical likelihood ratio.

Given paired samples ``x`` (from the raw trajectory) and ``y`` (from a
candidate trajectory), consecutive quadruples give terms

    h_i = k(x_{2i-1}, x_{2i}) + k(y_{2i-1}, y_{2i})
          - k(x_{2i-1}, y_{2i}) - k(x_{2i}, y_{2i-1})

whose mean is the linear-time unbiased MMD^2 estimate. Under the null
hypothesis the h_i have mean zero; the empirical likelihood of that mean,
Wilks-normalized, is asymptotically chi-square with one degree of freedom.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import chi2


@dataclass
class ELRResult:
    h: np.ndarray
    lam: float | None
    weights: np.ndarray | None
    statistic: float
    accept: bool
    threshold: float
    bandwidth: float = float("nan")
    reason: str = ""

    @property
    def decision(self) -> str:
        return "accept" if self.accept else "reject"

    def to_dict(self) -> dict:
        return {
            "decision": self.decision,
            "statistic": self.statistic if math.isfinite(self.statistic) else "inf",
            "threshold": self.threshold,
            "lambda": self.lam,
            "bandwidth": self.bandwidth,
            "n_terms": int(self.h.size),
            "h": self.h.tolist(),
            "weights": None if self.weights is None else self.weights.tolist(),
            "reason": self.reason,
        }


def gaussian_kernel(u: np.ndarray, v: np.ndarray, bandwidth: float) -> np.ndarray:
    """Row-wise ``exp(-|u - v|^2 / (2 bandwidth^2))``."""
    d2 = np.sum((np.asarray(u, float) - np.asarray(v, float)) ** 2, axis=-1)
    if math.isinf(bandwidth):
        return np.ones_like(d2)
    return np.exp(-d2 / (2.0 * bandwidth ** 2))


def median_bandwidth(*samples: np.ndarray) -> float:
    pooled = np.vstack([np.atleast_2d(s) for s in samples])
    d = pdist(pooled)
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def mmd_h(x: np.ndarray, y: np.ndarray, bandwidth: float) -> np.ndarray:
    """Per-quadruple linear-time MMD terms for equally sized, paired samples."""
    x = np.atleast_2d(np.asarray(x, float))
    y = np.atleast_2d(np.asarray(y, float))
    if x.shape != y.shape:
        raise ValueError(f"paired samples must match in shape, got {x.shape} and {y.shape}")
    n = (x.shape[0] // 2) * 2
    if n < 2:
        raise ValueError("need at least two observations per sample")
    x1, x2, y1, y2 = x[0:n:2], x[1:n:2], y[0:n:2], y[1:n:2]
    k = gaussian_kernel
    return k(x1, x2, bandwidth) + k(y1, y2, bandwidth) - k(x1, y2, bandwidth) - k(x2, y1, bandwidth)


def quadratic_mmd2(x: np.ndarray, y: np.ndarray, bandwidth: float) -> float:
    """Unbiased quadratic-time MMD^2 (U-statistic within samples)."""
    x = np.atleast_2d(np.asarray(x, float))
    y = np.atleast_2d(np.asarray(y, float))
    m, n = len(x), len(y)

    def gram(a, b):
        d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
        return np.exp(-d2 / (2.0 * bandwidth ** 2))

    kxx, kyy, kxy = gram(x, x), gram(y, y), gram(x, y)
    return float((kxx.sum() - np.trace(kxx)) / (m * (m - 1))
                 + (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
                 - 2.0 * kxy.mean())


def _constraint(lam: float, h: np.ndarray) -> float:
    return float(np.sum(h / (1.0 + lam * h)))


def solve_lambda(h: np.ndarray, tol: float = 1e-10, max_iter: int = 2000) -> float | None:
    """Root of ``sum h_i / (1 + lam h_i) = 0`` with every ``1 + lam h_i > 0``.

    Returns None when zero is outside the convex hull of the ``h_i`` (all of
    one sign and not all zero): no root exists.
    """
    h = np.asarray(h, float)
    if h.size == 0:
        raise ValueError("empty h")
    if np.all(h == 0):
        return 0.0
    hmin, hmax = float(h.min()), float(h.max())
    if not (hmin < 0 < hmax):
        return None
    # feasible open interval; g decreases monotonically from +inf to -inf on it
    lo, hi = -1.0 / hmax, -1.0 / hmin
    if abs(_constraint(0.0, h)) <= tol:
        return 0.0
    a, b = lo, hi
    lam = 0.0
    for _ in range(max_iter):
        lam = 0.5 * (a + b)
        if lam <= lo or lam >= hi or a == b:
            break
        g = _constraint(lam, h)
        if abs(g) <= tol:
            break
        if g > 0:
            a = lam
        else:
            b = lam
        if b - a <= 4 * np.finfo(float).eps * max(1.0, abs(lam)):
            break
    return lam


def el_weights(h: np.ndarray, lam: float) -> np.ndarray:
    h = np.asarray(h, float)
    return 1.0 / (h.size * (1.0 + lam * h))


def elr_statistic(h: np.ndarray, lam: float | None = None) -> float:
    """``2 sum log(1 + lam h_i)``, i.e. ``-2 sum log(n p_i)``; +inf without a root."""
    h = np.asarray(h, float)
    if lam is None:
        lam = solve_lambda(h)
    if lam is None:
        return math.inf
    return float(max(0.0, 2.0 * np.sum(np.log1p(lam * h))))


def chi2_threshold(confidence: float = 0.95, override: float | None = None) -> float:
    return float(override) if override is not None else float(chi2.ppf(confidence, 1))


def elr_test(h: np.ndarray, threshold: float, bandwidth: float = float("nan")) -> ELRResult:
    h = np.asarray(h, float)
    lam = solve_lambda(h)
    if lam is None:
        return ELRResult(h, None, None, math.inf, False, threshold, bandwidth, "no_root")
    t = elr_statistic(h, lam)
    return ELRResult(h, lam, el_weights(h, lam), t, t < threshold, threshold, bandwidth)


def two_sample_test(x: np.ndarray, y: np.ndarray, confidence: float = 0.95,
                    threshold: float | None = None, bandwidth: float | None = None,
                    min_len: int = 2) -> ELRResult:
    """Test whether paired feature samples ``x`` and ``y`` share a population.

    ``x`` and ``y`` are ``(m', 32)`` arrays already paired row by row. The
    bandwidth defaults to the median pairwise distance of the pooled rows.
    """
    thr = chi2_threshold(confidence, threshold)
    x = np.atleast_2d(np.asarray(x, float))
    y = np.atleast_2d(np.asarray(y, float))
    if len(y) < max(2, min_len):
        return ELRResult(np.zeros(0), None, None, math.inf, False, thr, reason="too_short")
    bw = median_bandwidth(x, y) if bandwidth is None else bandwidth
    return elr_test(mmd_h(x, y, bw), thr, bw)
