"""Normal distribution functions, Kolmogorov-Smirnov machinery and moment tests."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Any, Callable

import numpy as np

__all__ = [
    "DEFAULT_ALPHA",
    "TestReport",
    "covariance_compare",
    "kolmogorov_sf",
    "ks_statistic",
    "ks_test",
    "moment_z_test",
    "normal_cdf",
    "normal_quantile",
    "variance_z_test",
]

DEFAULT_ALPHA = 0.005
Z_LIMIT = 4.0

_STD_NORMAL = NormalDist()


@dataclass
class TestReport:
    """Outcome of one statistical check. ``passed`` is set by the test itself."""

    __test__ = False  # keep pytest from collecting this class

    name: str
    n: int
    statistic: float
    p_value: float | None
    target: Any
    tolerance: float
    passed: bool
    seed: int | None = None
    details: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        # numpy scalars do not survive json.dumps
        self.statistic = float(self.statistic)
        self.passed = bool(self.passed)
        if self.p_value is not None:
            self.p_value = float(self.p_value)

    def to_dict(self) -> dict[str, Any]:
        out = {
            "name": self.name,
            "n": self.n,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "target": self.target,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "seed": self.seed,
        }
        if self.details:
            out["details"] = self.details
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        pv = "" if self.p_value is None else f" p={self.p_value:.4g}"
        return f"[{verdict}] {self.name}: stat={self.statistic:.6g}{pv} tol={self.tolerance:g}"


def normal_cdf(z: float) -> float:
    """Standard normal distribution function."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def normal_quantile(u: float) -> float:
    """Inverse of :func:`normal_cdf` on (0, 1)."""
    if not 0.0 < u < 1.0:
        raise ValueError(f"normal_quantile needs 0 < u < 1, got {u!r}")
    return _STD_NORMAL.inv_cdf(u)


def kolmogorov_sf(lam: float) -> float:
    """P(K > lam) for the Kolmogorov distribution, clamped to [0, 1]."""
    if lam < 0.0 or math.isnan(lam):
        raise ValueError(f"lambda must be non-negative, got {lam!r}")
    if lam < 0.2:
        # the alternating series converges slowly here; P(K <= 0.2) < 1e-12
        return 1.0
    total = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * lam * lam)
        if term < 1e-14:
            break
        total += term if k % 2 else -term
        k += 1
    return min(1.0, max(0.0, 2.0 * total))


def _sorted_sample(sample, assume_sorted: bool) -> np.ndarray:
    x = np.asarray(sample, dtype=float)
    if x.ndim != 1:
        raise ValueError("sample must be one-dimensional")
    if np.any(np.isnan(x)):
        raise ValueError("sample contains NaN")
    if not assume_sorted:
        return np.sort(x)
    if np.any(np.diff(x) < 0.0):
        raise ValueError("sample must be sorted")
    return x


def ks_statistic(sample, cdf: Callable[[float], float] = normal_cdf, *, assume_sorted: bool = True) -> float:
    """D = max_i max(i/n - F(x_i), F(x_i) - (i-1)/n) for a sorted sample."""
    x = _sorted_sample(sample, assume_sorted)
    n = len(x)
    if n == 0:
        raise ValueError("empty sample")
    f = np.array([cdf(float(v)) for v in x])
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_test(
    sample,
    cdf: Callable[[float], float] = normal_cdf,
    *,
    name: str = "ks",
    alpha: float = DEFAULT_ALPHA,
    seed: int | None = None,
    assume_sorted: bool = True,
) -> TestReport:
    """One-sample KS test with the asymptotic null distribution.

    The sample must already be sorted unless ``assume_sorted`` is False.
    """
    x = _sorted_sample(sample, assume_sorted)
    n = len(x)
    if n < 8:
        raise ValueError(f"ks_test needs at least 8 observations, got {n}")
    d = ks_statistic(x, cdf)
    pv = kolmogorov_sf(math.sqrt(n) * d)
    return TestReport(name=name, n=n, statistic=d, p_value=pv, target=None, tolerance=alpha, passed=pv > alpha, seed=seed)


def moment_z_test(
    sample,
    target_mean: float,
    target_variance: float,
    *,
    name: str = "moments",
    seed: int | None = None,
    limit: float = Z_LIMIT,
) -> TestReport:
    """z-scores of the sample mean and variance against exact targets.

    SE(mean) = sqrt(v / R) and SE(variance) = v sqrt(2 / R), the latter valid
    for Gaussian samples. Passes iff both |z| <= ``limit``.
    """
    x = np.asarray(sample, dtype=float).ravel()
    n = len(x)
    if n < 30:
        raise ValueError(f"moment_z_test needs at least 30 observations, got {n}")
    mean = float(np.mean(x))
    var = float(np.var(x, ddof=1))
    if target_variance <= 0.0:
        if np.ptp(x) > 0.0:
            raise ValueError("non-constant sample against a degenerate target variance")
        z_mean = 0.0 if mean == target_mean else math.inf
        z_var = 0.0
    else:
        z_mean = (mean - target_mean) / math.sqrt(target_variance / n)
        z_var = (var - target_variance) / (target_variance * math.sqrt(2.0 / n))
    stat = max(abs(z_mean), abs(z_var))
    return TestReport(
        name=name,
        n=n,
        statistic=stat,
        p_value=None,
        target={"mean": target_mean, "variance": target_variance},
        tolerance=limit,
        passed=stat <= limit,
        seed=seed,
        details={"sample_mean": mean, "sample_variance": var, "z_mean": z_mean, "z_variance": z_var},
    )


def variance_z_test(
    sample,
    target_variance: float,
    *,
    name: str = "variance",
    seed: int | None = None,
    limit: float = Z_LIMIT,
    known_mean: float | None = None,
) -> TestReport:
    """Sample variance against a target using the distribution-free standard error
    sqrt((m4 - s^4) / R) from the sample's own fourth moment.

    With ``known_mean`` the raw second moment about that mean is tested.
    """
    x = np.asarray(sample, dtype=float).ravel()
    n = len(x)
    if n < 30:
        raise ValueError(f"variance_z_test needs at least 30 observations, got {n}")
    c = x - (np.mean(x) if known_mean is None else known_mean)
    sq = c * c
    var = float(np.mean(sq)) if known_mean is not None else float(np.var(x, ddof=1))
    se = float(np.std(sq, ddof=1)) / math.sqrt(n)
    if se == 0.0:
        z = 0.0 if var == target_variance else math.inf
    else:
        z = (var - target_variance) / se
    return TestReport(
        name=name,
        n=n,
        statistic=abs(z),
        p_value=None,
        target=target_variance,
        tolerance=limit,
        passed=abs(z) <= limit,
        seed=seed,
        details={"sample_variance": var, "standard_error": se, "z": z},
    )


def covariance_compare(
    samples,
    target,
    *,
    name: str = "covariance",
    seed: int | None = None,
    limit: float = Z_LIMIT,
) -> TestReport:
    """Entrywise z-scores of a sample covariance against ``target``.

    SE_ij = sqrt((T_ii T_jj + T_ij^2) / R), the Gaussian asymptotic standard
    error. Passes iff max |z| <= ``limit``.
    """
    x = np.asarray(samples, dtype=float)
    t = np.asarray(target, dtype=float)
    if x.ndim != 2:
        raise ValueError("samples must be an R x k array")
    r, k = x.shape
    if t.shape != (k, k):
        raise ValueError(f"target shape {t.shape} does not match sample dimension {k}")
    if r < 100:
        raise ValueError(f"covariance_compare needs at least 100 samples, got {r}")
    if not np.allclose(t, t.T):
        raise ValueError("target must be symmetric")
    if np.min(np.linalg.eigvalsh(t)) < -1e-12 * max(1.0, float(np.max(np.abs(t)))):
        raise ValueError("target must be positive semi-definite")
    cov = np.cov(x, rowvar=False, ddof=1).reshape(k, k)
    diag = np.diag(t)
    se = np.sqrt((np.outer(diag, diag) + t * t) / r)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0.0, (cov - t) / se, np.where(cov == t, 0.0, np.inf))
    stat = float(np.max(np.abs(z)))
    return TestReport(
        name=name,
        n=r,
        statistic=stat,
        p_value=None,
        target=t.tolist(),
        tolerance=limit,
        passed=stat <= limit,
        seed=seed,
        details={"sample_covariance": cov.tolist(), "z": z.tolist(), "standard_error": se.tolist()},
    )
