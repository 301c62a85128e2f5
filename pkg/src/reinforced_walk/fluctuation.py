"""Monte Carlo ensembles of the fluctuation statistic.

For a path simulated to horizon N the unobservable limit W is replaced by the
same path's terminal martingale M_N = (S_N - N mean) / a_N. The statistic

    F_n = (S_n - n mean - a_n M_N) / sqrt(n) = -(a_n / sqrt(n)) (M_N - M_n)

then has exact variance v_exact(p, n, N) times the step covariance, which is
what the tests compare against.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import WalkPath, simulate_reinforced_path
from .numerics import a_seq, exact_moments, v_exact
from .stats import TestReport, variance_z_test
from .steps import RandomStream, StepDistribution, residual_distribution, truncate_distribution

__all__ = [
    "BudgetExceeded",
    "EnsembleSpec",
    "FluctuationEnsemble",
    "PathBatch",
    "cramer_wold_project",
    "estimate_W",
    "fluctuation_statistic",
    "lln_diagnostic",
    "random_directions",
    "residual_fluctuation_check",
    "run_ensemble",
    "simulate_paths",
    "step_budget",
]

BUDGET_ENV = "REINFORCE_WALK_BUDGET"
DEFAULT_BUDGET = 1 << 32


class BudgetExceeded(RuntimeError):
    """Requested paths x horizon exceeds the configured step budget."""


def step_budget() -> int:
    raw = os.environ.get(BUDGET_ENV)
    if raw is None or not raw.strip():
        return DEFAULT_BUDGET
    try:
        value = int(float(raw))
    except ValueError:
        raise ValueError(f"{BUDGET_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"{BUDGET_ENV} must be positive, got {value}")
    return value


def _check_budget(paths: int, horizon: int) -> None:
    budget = step_budget()
    if paths * horizon > budget:
        raise BudgetExceeded(f"{paths} paths x {horizon} steps exceeds budget of {budget} steps ({BUDGET_ENV})")


# ---------------------------------------------------------------------------
# per-path quantities
# ---------------------------------------------------------------------------


def estimate_W(path: WalkPath, mean=None) -> np.ndarray:
    """Finite-horizon proxy M_N = (S_N - N mean) / a_N for W."""
    mean = np.zeros(path.dim) if mean is None else np.asarray(mean, dtype=float)
    return (path.terminal_sum - path.horizon * mean) / a_seq(path.p, path.horizon)


def estimate_L(path: WalkPath, mean=None) -> np.ndarray:
    """Proxy for the limit of (S_n - n mean) / n^p, i.e. M_N / Gamma(p + 1)."""
    return estimate_W(path, mean) / math.gamma(path.p + 1.0)


def fluctuation_statistic(path: WalkPath, n: int, W_proxy, mean, p: float) -> np.ndarray:
    """(S_n - n mean - a_n W) / sqrt(n) at a recorded checkpoint n."""
    s_n = path.sum_at(n)
    return (s_n - n * np.asarray(mean, dtype=float) - a_seq(p, n) * np.asarray(W_proxy)) / math.sqrt(n)


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathBatch:
    """Checkpoint sums of R independent paths, in path-index order."""

    distribution: StepDistribution
    p: float
    horizon: int
    checkpoints: tuple[int, ...]
    master_seed: int
    sums: np.ndarray  # R x k x d
    squared_sums: np.ndarray  # R x k x d
    terminal_martingale: np.ndarray  # R x d

    @property
    def paths(self) -> int:
        return self.sums.shape[0]

    def centred_sums(self) -> np.ndarray:
        n = np.asarray(self.checkpoints, dtype=float)[None, :, None]
        return self.sums - n * self.distribution.mean[None, None, :]

    def martingale_at(self) -> np.ndarray:
        """M_n = (S_n - n mean) / a_n at every checkpoint, R x k x d."""
        a = np.array([a_seq(self.p, n) for n in self.checkpoints])[None, :, None]
        return self.centred_sums() / a


def _simulate_block(d, p, N, cps, master_seed, start, stop):
    k, dim = len(cps), d.dim
    sums = np.empty((stop - start, k, dim))
    squares = np.empty((stop - start, k, dim))
    w = np.empty((stop - start, dim))
    for row, path_id in enumerate(range(start, stop)):
        path = simulate_reinforced_path(d, p, N, cps, RandomStream(master_seed, path_id))
        sums[row] = path.sums
        squares[row] = path.squared_sums
        w[row] = path.terminal_martingale
    return sums, squares, w


def _blocks(paths: int, workers: int) -> list[tuple[int, int]]:
    nblocks = max(1, min(paths, workers * 4))
    edges = np.linspace(0, paths, nblocks + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def default_workers() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def simulate_paths(
    d: StepDistribution,
    p: float,
    N: int,
    checkpoints,
    paths: int,
    master_seed: int,
    workers: int = 1,
) -> PathBatch:
    """Simulate ``paths`` reinforced walks; path i uses stream (master_seed, i).

    Output is independent of ``workers``: blocks are contiguous path ranges
    gathered back in order.
    """
    if paths < 1:
        raise ValueError(f"need at least one path, got {paths}")
    if workers < 1:
        raise ValueError(f"workers must be positive, got {workers}")
    cps = tuple(sorted({int(c) for c in checkpoints} | {int(N)}))
    _check_budget(paths, N)
    blocks = _blocks(paths, workers)
    if workers == 1 or len(blocks) == 1:
        parts = [_simulate_block(d, p, N, cps, master_seed, a, b) for a, b in blocks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_simulate_block, d, p, N, cps, master_seed, a, b) for a, b in blocks]
            parts = [f.result() for f in futures]
    sums = np.concatenate([s for s, _, _ in parts])
    squares = np.concatenate([q for _, q, _ in parts])
    w = np.concatenate([m for _, _, m in parts])
    return PathBatch(d, float(p), int(N), cps, int(master_seed), sums, squares, w)


@dataclass(frozen=True)
class EnsembleSpec:
    distribution: StepDistribution
    p: float
    checkpoints: tuple[int, ...]
    horizon: int
    paths: int
    master_seed: int
    projection_directions: tuple[tuple[float, ...], ...] = ()
    min_ratio: int = 64
    min_checkpoint: int = 16

    def __post_init__(self):
        object.__setattr__(self, "checkpoints", tuple(int(c) for c in self.checkpoints))
        cps = self.checkpoints
        if not 0.5 < self.p < 1.0:
            raise ValueError(f"ensembles need p in (1/2, 1), got {self.p}")
        if not cps or any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError(f"checkpoints must be non-empty and strictly increasing, got {cps}")
        if cps[0] < self.min_checkpoint:
            raise ValueError(f"checkpoints must be >= {self.min_checkpoint}, got {cps[0]}")
        if self.horizon <= cps[-1] or self.horizon < self.min_ratio * cps[-1]:
            raise ValueError(
                f"horizon {self.horizon} must be at least {self.min_ratio} x the last checkpoint {cps[-1]}"
            )
        if self.paths < 1:
            raise ValueError(f"paths must be positive, got {self.paths}")
        for a in self.projection_directions:
            if len(a) != self.distribution.dim:
                raise ValueError(f"direction {a} does not match dimension {self.distribution.dim}")


@dataclass(frozen=True)
class FluctuationEnsemble:
    """F (R x k x dim), W estimates (R x dim) and the exact variance targets."""

    spec: EnsembleSpec
    F: np.ndarray
    W_estimates: np.ndarray
    v_exact: tuple[float, ...]
    limit_variance: float
    batch: PathBatch = field(repr=False)

    def target_covariance(self, j: int) -> np.ndarray:
        """v_exact(p, n_j, N) times the step covariance."""
        return self.v_exact[j] * self.spec.distribution.covariance

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path_id", "checkpoint_n", "coord", "F_value", "W_est"])
        for i in range(self.F.shape[0]):
            for j, n in enumerate(self.spec.checkpoints):
                for c in range(self.F.shape[2]):
                    w.writerow([i, n, c, _fmt(self.F[i, j, c]), _fmt(self.W_estimates[i, c])])
        return buf.getvalue()

    def summary(self) -> list[dict]:
        cov = self.spec.distribution.covariance
        rows = []
        for j, n in enumerate(self.spec.checkpoints):
            f = self.F[:, j, :]
            rows.append(
                {
                    "checkpoint_n": n,
                    "sample_mean": f.mean(axis=0).tolist(),
                    "sample_variance": f.var(axis=0, ddof=1).tolist(),
                    "v_exact": self.v_exact[j],
                    "target_variance": (self.v_exact[j] * np.diag(cov)).tolist(),
                    "limit_variance": (self.limit_variance * np.diag(cov)).tolist(),
                }
            )
        return rows


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def run_ensemble(spec: EnsembleSpec, workers: int = 1) -> FluctuationEnsemble:
    """Simulate the ensemble and compute F at every checkpoint."""
    batch = simulate_paths(
        spec.distribution, spec.p, spec.horizon, spec.checkpoints, spec.paths, spec.master_seed, workers
    )
    idx = [batch.checkpoints.index(n) for n in spec.checkpoints]
    centred = batch.centred_sums()[:, idx, :]
    n = np.asarray(spec.checkpoints, dtype=float)
    a = np.array([a_seq(spec.p, c) for c in spec.checkpoints])
    W = batch.terminal_martingale
    F = (centred - a[None, :, None] * W[:, None, :]) / np.sqrt(n)[None, :, None]
    targets = tuple(v_exact(spec.p, c, spec.horizon) for c in spec.checkpoints)
    return FluctuationEnsemble(
        spec=spec,
        F=F,
        W_estimates=W,
        v_exact=targets,
        limit_variance=1.0 / (2.0 * spec.p - 1.0),
        batch=batch,
    )


def cramer_wold_project(ens: FluctuationEnsemble, direction) -> tuple[np.ndarray, np.ndarray]:
    """Samples <a, F> (R x k) and their target variances a'Sigma a v_exact (k,)."""
    a = np.asarray(direction, dtype=float)
    if a.shape != (ens.F.shape[2],):
        raise ValueError(f"direction must have length {ens.F.shape[2]}")
    if abs(float(np.linalg.norm(a)) - 1.0) > 1e-12:
        raise ValueError(f"direction must be a unit vector, |a| = {np.linalg.norm(a)!r}")
    sigma_a2 = float(a @ ens.spec.distribution.covariance @ a)
    return ens.F @ a, sigma_a2 * np.asarray(ens.v_exact)


# Stream id reserved for projection directions; far above any path index.
DIRECTION_STREAM = 1 << 62


def random_directions(dim: int, count: int, master_seed: int) -> list[tuple[float, ...]]:
    """``count`` unit vectors, uniform on the sphere, derived from the master seed."""
    if dim < 1 or count < 0:
        raise ValueError(f"need dim >= 1 and count >= 0, got {dim}, {count}")
    g = RandomStream(master_seed, DIRECTION_STREAM).normal((count, dim))
    out = []
    for row in g:
        u = row / np.linalg.norm(row)
        # renormalise once more so |u| = 1 to within an ulp or two
        u = u / math.sqrt(float(u @ u))
        out.append(tuple(float(v) for v in u))
    return out


def lln_diagnostic(p: float, n: int, batch: PathBatch | None = None) -> dict:
    """Exact E((S_n / n)^2) / sigma^2 = a_n^2 m_n / n^2, optionally with the
    simulated counterpart (and its standard error) from ``batch``.
    """
    em = exact_moments(p, n)
    out = {"n": n, "exact": em.walk_second_moment(n) / (n * n)}
    if batch is not None:
        j = batch.checkpoints.index(n)
        sigma2 = batch.distribution.variance
        x = np.sum(batch.centred_sums()[:, j, :] ** 2, axis=1) / (n * n) / sigma2
        out["simulated"] = float(np.mean(x))
        out["standard_error"] = float(np.std(x, ddof=1) / math.sqrt(len(x)))
    return out


def residual_fluctuation_check(
    base: StepDistribution,
    p: float,
    b: float,
    n: int,
    N: int,
    paths: int,
    master_seed: int = 0,
    workers: int = 1,
) -> TestReport:
    """Fluctuation variance of the walk driven by X - X^(b) against zeta_b^2 v_exact.

    The standard error comes from the sample's fourth moment, since the
    residual statistic is visibly heavy-tailed at desk-scale n.
    """
    _, _, zeta = truncate_distribution(base, b)
    resid = residual_distribution(base, b)
    target = zeta * zeta * v_exact(p, n, N)
    name = f"residual b={b:g}"
    if zeta == 0.0:
        return TestReport(name, paths, 0.0, None, 0.0, 4.0, True, master_seed, {"sample_variance": 0.0})
    spec = EnsembleSpec(resid, p, (n,), N, paths, master_seed)
    ens = run_ensemble(spec, workers)
    report = variance_z_test(ens.F[:, 0, 0], target, name=name, seed=master_seed)
    report.details["zeta_b"] = zeta
    report.details["v_exact"] = v_exact(p, n, N)
    return report
