"""Reinforced uniform samples and their empirical process.

The k-dimensional indicator walk with steps 1{U^_i <= x_j} - x_j has
G^_n(x_j) = S_n^(j) / sqrt(n), and its terminal martingale plays the role
of the exchangeable-increment bridge B^(p) at the grid points.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .engine import WalkPath, reinforced_latents, simulate_reinforced_path
from .fluctuation import EnsembleSpec, FluctuationEnsemble, run_ensemble
from .steps import RandomStream, _check_grid, indicator_grid

__all__ = [
    "GridSpec",
    "ReinforcedUniformSample",
    "bridge_fdd_covariance",
    "bridge_fluctuation_ensemble",
    "bridge_rows_csv",
    "empirical_process_at",
    "indicator_walk",
    "simulate_reinforced_uniforms",
]


@dataclass(frozen=True)
class GridSpec:
    points: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(float(x) for x in _check_grid(self.points)))

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        return cls(tuple(float(t) for t in text.split(",") if t.strip()))

    def array(self) -> np.ndarray:
        return np.asarray(self.points)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class ReinforcedUniformSample:
    """Reinforced uniforms U^_1..U^_n with the distinct values and their counts."""

    values: np.ndarray
    distinct_values: np.ndarray
    counts: np.ndarray
    p: float
    stream_id: int

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def distinct(self) -> int:
        return len(self.distinct_values)


def simulate_reinforced_uniforms(p: float, n: int, stream: RandomStream | None = None) -> ReinforcedUniformSample:
    """Reinforce an i.i.d. uniform sequence; uses the same stream layout as the
    indicator walk, so both see identical U^_i for the same stream.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    stream = stream if stream is not None else RandomStream(0, 0)
    # the latent law of any indicator grid is the uniform itself
    values, src = reinforced_latents(indicator_grid([0.5]), p, n, stream.generator)
    # a fresh time index copies itself, so the values there are the distinct
    # U_j in order of first appearance
    fresh_idx, counts = np.unique(src, return_counts=True)
    return ReinforcedUniformSample(
        values=values,
        distinct_values=values[fresh_idx],
        counts=counts,
        p=float(p),
        stream_id=stream.stream_id,
    )


def empirical_process_at(sample: ReinforcedUniformSample, grid) -> np.ndarray:
    """G^_n(x) for each grid point, evaluated from occurrence counts."""
    x = np.asarray(grid.points if isinstance(grid, GridSpec) else grid, dtype=float)
    order = np.argsort(sample.distinct_values, kind="stable")
    cum = np.concatenate(([0], np.cumsum(sample.counts[order])))
    hits = cum[np.searchsorted(sample.distinct_values[order], x, side="right")]
    n = sample.n
    return (hits - n * x) / math.sqrt(n)


def indicator_walk(grid, p: float, N: int, checkpoints=None, stream: RandomStream | None = None) -> WalkPath:
    """k-dimensional reinforced walk of grid indicators sharing one U^_i per step."""
    g = grid if isinstance(grid, GridSpec) else GridSpec(tuple(grid))
    return simulate_reinforced_path(indicator_grid(g.points), p, N, checkpoints, stream)


def bridge_fdd_covariance(grid, p: float) -> np.ndarray:
    """Limit covariance x_i (1 - x_j) / (2p - 1), i <= j."""
    if not 0.5 < p < 1.0:
        raise ValueError(f"p must lie in (1/2, 1), got {p}")
    g = grid if isinstance(grid, GridSpec) else GridSpec(tuple(grid))
    return indicator_grid(g.points).covariance / (2.0 * p - 1.0)


def bridge_fluctuation_ensemble(
    grid,
    p: float,
    n: int,
    N: int,
    paths: int,
    master_seed: int,
    workers: int = 1,
) -> FluctuationEnsemble:
    """Samples of G^_n(x) - a_n n^(-1/2) B(x) with B proxied by each path's M_N.

    Target law: N(0, v_exact(p, n, N) * Sigma_grid).
    """
    g = grid if isinstance(grid, GridSpec) else GridSpec(tuple(grid))
    spec = EnsembleSpec(indicator_grid(g.points), p, (n,), N, paths, master_seed)
    return run_ensemble(spec, workers)


def bridge_rows_csv(ens: FluctuationEnsemble, grid) -> str:
    """CSV rows ``path_id, x, G_n_value, bridge_proxy_value, fluct_value``."""
    g = grid if isinstance(grid, GridSpec) else GridSpec(tuple(grid))
    n = ens.spec.checkpoints[0]
    G = ens.batch.sums[:, ens.batch.checkpoints.index(n), :] / math.sqrt(n)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path_id", "x", "G_n_value", "bridge_proxy_value", "fluct_value"])
    for i in range(G.shape[0]):
        for j, x in enumerate(g.points):
            w.writerow([i, repr(x), _fmt(G[i, j]), _fmt(ens.W_estimates[i, j]), _fmt(ens.F[i, 0, j])])
    return buf.getvalue()


def _fmt(x: float) -> str:
    return format(float(x), ".17g")
