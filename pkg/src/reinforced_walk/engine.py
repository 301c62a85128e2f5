"""The step-reinforcement algorithm and reference elephant walks.

Per path, a stream is consumed in a fixed layout: N latent step draws, then
N reinforcement coins, then N recall uniforms. With p = 0 the walk is
therefore exactly the i.i.d. partial-sum walk of the first N draws.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .numerics import a_seq
from .steps import RandomStream, StepDistribution, lattice_isotropic, rademacher

__all__ = [
    "WalkPath",
    "erw_param_map",
    "iid_walk",
    "merw_param_map",
    "reinforced_latents",
    "simulate_erw",
    "simulate_merw",
    "simulate_reinforced_path",
]


@dataclass(frozen=True)
class WalkPath:
    """One trajectory sampled at its checkpoints.

    ``sums[i]`` is S_n and ``squared_sums[i]`` the per-coordinate sum of squared
    increments V_n at ``checkpoints[i]``; ``terminal_martingale`` is
    (S_N - N mean) / a_N at the horizon.
    """

    dim: int
    horizon: int
    p: float
    checkpoints: tuple[int, ...]
    sums: np.ndarray
    squared_sums: np.ndarray
    terminal_sum: np.ndarray
    terminal_martingale: np.ndarray
    stream_id: int
    first_step: np.ndarray

    def sum_at(self, n: int) -> np.ndarray:
        try:
            return self.sums[self.checkpoints.index(n)]
        except ValueError:
            raise KeyError(f"checkpoint {n} was not recorded") from None

    def to_csv(self, a_values: bool = False) -> str:
        """Rows ``n, S_1..S_d, V_1..V_d, M_terminal_flag`` (flag marks n = N)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["n"]
        header += [f"S_{j + 1}" for j in range(self.dim)]
        header += [f"V_{j + 1}" for j in range(self.dim)]
        header.append("M_terminal_flag")
        if a_values:
            header.append("a_n")
        w.writerow(header)
        for i, n in enumerate(self.checkpoints):
            row = [str(n)]
            row += [_fmt(v) for v in self.sums[i]]
            row += [_fmt(v) for v in self.squared_sums[i]]
            row.append("1" if n == self.horizon else "0")
            if a_values:
                row.append(_fmt(a_seq(self.p, n)))
            w.writerow(row)
        return buf.getvalue()


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _check_run(N: int, checkpoints) -> tuple[int, tuple[int, ...]]:
    if isinstance(N, bool) or int(N) != N or N < 1:
        raise ValueError(f"horizon must be a positive integer, got {N!r}")
    N = int(N)
    if checkpoints is None:
        checkpoints = (N,)
    cps = tuple(sorted({int(c) for c in checkpoints}))
    if not cps:
        raise ValueError("checkpoints must not be empty")
    if cps[0] < 1 or cps[-1] > N:
        raise ValueError(f"checkpoints must lie in [1, {N}], got {cps}")
    return N, cps


def _check_prob(x: float, name: str) -> float:
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {x}")
    return x


def reinforced_latents(d: StepDistribution, p: float, N: int, rng: np.random.Generator):
    """Latent draws of the reinforced sequence and the index each one copies."""
    fresh = d.draw_latent(rng, N)
    coin_u = rng.random(N)
    pick_u = rng.random(N)
    src = _kernels.resolve_sources(coin_u, pick_u, p)
    return fresh[src], src


def _assemble(d, p, N, cps, sums, steps, stream_id) -> WalkPath:
    idx = np.asarray(cps) - 1
    squared = np.cumsum(steps * steps, axis=0)
    terminal = sums[-1]
    martingale = (terminal - N * d.mean) / a_seq(p, N)
    return WalkPath(
        dim=d.dim,
        horizon=N,
        p=p,
        checkpoints=cps,
        sums=sums[idx].copy(),
        squared_sums=squared[idx].copy(),
        terminal_sum=terminal.copy(),
        terminal_martingale=martingale,
        stream_id=stream_id,
        first_step=steps[0].copy(),
    )


def simulate_reinforced_path(
    d: StepDistribution,
    p: float,
    N: int,
    checkpoints=None,
    stream: RandomStream | None = None,
) -> WalkPath:
    """Simulate X^_1..X^_N: each step after the first repeats a uniformly
    chosen earlier step with probability p, otherwise it is a fresh draw.

    The whole vector step is recalled with a single coin and a single index.
    """
    p = _check_prob(p, "p")
    N, cps = _check_run(N, checkpoints)
    stream = stream if stream is not None else RandomStream(0, 0)
    latent, _ = reinforced_latents(d, p, N, stream.generator)
    steps = d.steps_from_latent(latent)
    sums = d.partial_sums(latent, steps)
    return _assemble(d, p, N, cps, sums, steps, stream.stream_id)


def iid_walk(d: StepDistribution, N: int, checkpoints=None, stream: RandomStream | None = None) -> WalkPath:
    """Plain partial sums of the first N draws of ``stream``."""
    N, cps = _check_run(N, checkpoints)
    stream = stream if stream is not None else RandomStream(0, 0)
    latent = d.draw_latent(stream.generator, N)
    steps = d.steps_from_latent(latent)
    return _assemble(d, 0.0, N, cps, d.partial_sums(latent, steps), steps, stream.stream_id)


def erw_param_map(p: float) -> float:
    """Memory parameter of the elephant walk matching reinforced Rademacher steps."""
    return (p + 1.0) / 2.0


def merw_param_map(p: float, d: int) -> float:
    """Memory parameter of the d-dimensional elephant walk matching reinforced
    isotropic lattice steps: the recalled step is repeated either by the coin
    or by a fresh draw that happens to coincide with it.
    """
    if d < 1:
        raise ValueError(f"dimension must be positive, got {d}")
    return p + (1.0 - p) / (2.0 * d)


def simulate_erw(q: float, N: int, checkpoints=None, stream: RandomStream | None = None) -> WalkPath:
    q = _check_prob(q, "q")
    N, cps = _check_run(N, checkpoints)
    stream = stream if stream is not None else RandomStream(0, 0)
    rng = stream.generator
    first = 1 if rng.random() < 0.5 else -1
    recall = rng.random(N)
    keep = rng.random(N)
    steps = _kernels.erw_steps(first, q, recall, keep).astype(float)[:, None]
    sums = np.cumsum(steps, axis=0)
    # ERW is the reinforced walk with p = 2q - 1; report M_N on that scale.
    p_equiv = min(max(2.0 * q - 1.0, 0.0), 1.0)
    return _assemble(rademacher(), p_equiv, N, cps, sums, steps, stream.stream_id)


def simulate_merw(q: float, dim: int, N: int, checkpoints=None, stream: RandomStream | None = None) -> WalkPath:
    q = _check_prob(q, "q")
    N, cps = _check_run(N, checkpoints)
    if dim < 1:
        raise ValueError(f"dimension must be positive, got {dim}")
    stream = stream if stream is not None else RandomStream(0, 0)
    rng = stream.generator
    ndir = 2 * dim
    first = min(int(rng.random() * ndir), ndir - 1)
    recall = rng.random(N)
    keep = rng.random(N)
    other = rng.random(N)
    dirs = _kernels.merw_directions(first, q, ndir, recall, keep, other)
    lattice = lattice_isotropic(dim)
    steps = lattice.support[dirs]
    sums = np.cumsum(steps, axis=0)
    p_equiv = min(max((2 * dim * q - 1.0) / (2 * dim - 1.0), 0.0), 1.0)
    return _assemble(lattice, p_equiv, N, cps, sums, steps, stream.stream_id)
