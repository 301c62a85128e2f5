"""Typical-step laws, truncation, and seeded random streams.

A :class:`StepDistribution` carries its exact mean and covariance next to a
vectorised sampler. Sampling goes through a "latent" draw (a uniform, an atom
index, a standard normal) that is then mapped to a step vector; the
reinforcement engine recalls latent draws, which keeps the indicator walk and
the reinforced uniforms on exactly the same randomness.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

__all__ = [
    "DistributionError",
    "RandomStream",
    "StepDistribution",
    "derive_stream",
    "discrete",
    "gaussian",
    "indicator_grid",
    "lattice_isotropic",
    "make_distribution",
    "rademacher",
    "residual_distribution",
    "sample_step",
    "truncate_distribution",
]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class DistributionError(ValueError):
    """Malformed or unsupported step-distribution descriptor."""


def _phi(z: float) -> float:
    return _INV_SQRT2PI * math.exp(-0.5 * z * z)


def _Phi(z: float) -> float:
    return 0.5 * math.erfc(-z / _SQRT2)


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------


class RandomStream:
    """Counter-based stream keyed by ``(master_seed, stream_id)``.

    The Philox key is a hash of both integers, so any stream is reachable in
    O(1) without jumping. One stream belongs to one path; do not share it
    across workers.
    """

    def __init__(self, master_seed: int, stream_id: int):
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        seq = np.random.SeedSequence(
            entropy=self.master_seed % (1 << 64), spawn_key=(self.stream_id % (1 << 64),)
        )
        key = seq.generate_state(2, dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"RandomStream(master_seed={self.master_seed}, stream_id={self.stream_id})"

    def uniform(self, size: int | None = None):
        return self.generator.random(size)

    def normal(self, size: int | None = None):
        return self.generator.standard_normal(size)

    @property
    def counter(self) -> int:
        """Philox block counter (low word); advances as variates are consumed."""
        return int(self.generator.bit_generator.state["state"]["counter"][0])


def derive_stream(master_seed: int, stream_id: int) -> RandomStream:
    return RandomStream(master_seed, stream_id)


# ---------------------------------------------------------------------------
# step distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StepDistribution:
    """A typical-step law mu on R^dim with exact first and second moments.

    ``support``/``probs`` are filled for finite-support laws and enable the
    exact enumeration oracle. ``bound`` is ``inf`` for unbounded laws.
    """

    kind: str
    dim: int
    mean: np.ndarray
    covariance: np.ndarray
    bound: float
    params: dict[str, Any] = field(default_factory=dict)
    support: np.ndarray | None = None
    probs: np.ndarray | None = None

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.bound)

    @property
    def finite_support(self) -> bool:
        return self.support is not None

    @property
    def variance(self) -> float:
        """Trace of the covariance; the scalar variance in dimension one."""
        return float(np.trace(self.covariance))

    def describe(self) -> str:
        return self.params.get("descriptor", self.kind)

    def draw_latent(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Latent variates consumed from ``rng`` in a fixed layout."""
        if self.kind in ("gaussian", "gaussian_truncated", "gaussian_residual"):
            return rng.standard_normal(size)
        if self.kind == "indicator_grid":
            return rng.random(size)
        cdf = self.params["cdf"]
        idx = np.searchsorted(cdf, rng.random(size), side="right")
        return np.minimum(idx, len(cdf) - 1)

    def steps_from_latent(self, latent: np.ndarray) -> np.ndarray:
        """Map latent draws to an array of shape ``(len(latent), dim)``."""
        if self.kind == "indicator_grid":
            x = self.params["grid"]
            return (latent[:, None] <= x[None, :]).astype(float) - x[None, :]
        if self.kind.startswith("gaussian"):
            m, s = self.params["loc"], self.params["scale"]
            v = m + s * latent
            if self.kind == "gaussian_truncated":
                v = np.where(np.abs(v) <= self.params["b"], v, 0.0) - self.params["shift"]
            elif self.kind == "gaussian_residual":
                v = np.where(np.abs(v) > self.params["b"], v, 0.0) + self.params["shift"]
            return v[:, None]
        return self.support[latent]

    def partial_sums(self, latent: np.ndarray, steps: np.ndarray | None = None) -> np.ndarray:
        """Running sums of the mapped steps, shape ``(len(latent), dim)``."""
        if self.kind == "indicator_grid":
            # Integer hit counts keep the sums exact: S_n = #{U_i <= x} - n x.
            x = self.params["grid"]
            hits = np.cumsum(latent[:, None] <= x[None, :], axis=0)
            n = np.arange(1, len(latent) + 1, dtype=float)[:, None]
            return hits - n * x[None, :]
        if steps is None:
            steps = self.steps_from_latent(latent)
        return np.cumsum(steps, axis=0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.steps_from_latent(self.draw_latent(rng, size))


def _finite(kind, support, probs, *, params=None, bound=None) -> StepDistribution:
    support = np.asarray(support, dtype=float)
    if support.ndim == 1:
        support = support[:, None]
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or len(probs) != len(support) or len(probs) == 0:
        raise DistributionError("support and probabilities must have equal non-zero length")
    if np.any(probs < 0.0) or not np.all(np.isfinite(probs)):
        raise DistributionError("probabilities must be non-negative")
    if abs(math.fsum(probs) - 1.0) > 1e-12:
        raise DistributionError(f"probabilities sum to {math.fsum(probs)!r}, not 1")
    mean = probs @ support
    centred = support - mean
    cov = (centred * probs[:, None]).T @ centred
    params = dict(params or {})
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    params["cdf"] = cdf
    if bound is None:
        bound = float(np.max(np.abs(support)))
    support.flags.writeable = False
    probs.flags.writeable = False
    return StepDistribution(
        kind=kind,
        dim=support.shape[1],
        mean=mean,
        covariance=cov,
        bound=bound,
        params=params,
        support=support,
        probs=probs,
    )


def rademacher() -> StepDistribution:
    return _finite("rademacher", [-1.0, 1.0], [0.5, 0.5], params={"descriptor": "rademacher"})


def lattice_isotropic(d: int) -> StepDistribution:
    """Uniform law on the 2d unit steps +-e_1..+-e_d.

    Atoms are ordered (+e_1, -e_1, +e_2, -e_2, ...), which is also the MERW
    direction code.
    """
    if isinstance(d, bool) or int(d) != d or d < 1:
        raise DistributionError(f"lattice dimension must be a positive integer, got {d!r}")
    d = int(d)
    atoms = np.zeros((2 * d, d))
    for axis in range(d):
        atoms[2 * axis, axis] = 1.0
        atoms[2 * axis + 1, axis] = -1.0
    dist = _finite(
        "lattice_isotropic",
        atoms,
        np.full(2 * d, 1.0 / (2 * d)),
        params={"descriptor": f"lattice:{d}", "d": d},
    )
    return dist


def _check_grid(xs) -> np.ndarray:
    x = np.asarray(xs, dtype=float)
    if x.ndim != 1 or len(x) == 0:
        raise DistributionError("grid must be a non-empty list of points")
    if not np.all((x > 0.0) & (x < 1.0)):
        raise DistributionError("grid points must lie strictly inside (0, 1)")
    if np.any(np.diff(x) <= 0.0):
        raise DistributionError("grid points must be strictly increasing")
    return x


def indicator_grid(xs) -> StepDistribution:
    """Steps (1{U <= x_1} - x_1, ..., 1{U <= x_k} - x_k) for a uniform U."""
    x = _check_grid(xs)
    k = len(x)
    # U falls in one of k + 1 cells; cell c sets indicators j >= c.
    edges = np.concatenate(([0.0], x, [1.0]))
    probs = np.diff(edges)
    support = np.array([[1.0 if j >= c else 0.0 for j in range(k)] for c in range(k + 1)]) - x
    lo = np.minimum.outer(x, x)
    hi = np.maximum.outer(x, x)
    cov = lo * (1.0 - hi)
    x.flags.writeable = False
    dist = _finite(
        "indicator_grid",
        support,
        probs,
        params={"descriptor": "indicator:" + ",".join(repr(float(v)) for v in x), "grid": x},
        bound=float(np.max(np.abs(support))),
    )
    # closed-form entries rather than the summed ones (equal to rounding)
    return replace(dist, mean=np.zeros(k), covariance=cov)


def gaussian(mean: float = 0.0, sd: float = 1.0) -> StepDistribution:
    if not (math.isfinite(mean) and math.isfinite(sd)) or sd < 0.0:
        raise DistributionError(f"gaussian needs finite mean and sd >= 0, got {mean}, {sd}")
    return StepDistribution(
        kind="gaussian",
        dim=1,
        mean=np.array([float(mean)]),
        covariance=np.array([[float(sd) ** 2]]),
        bound=math.inf if sd > 0 else abs(mean),
        params={"descriptor": f"gaussian:{mean!r},{sd!r}", "loc": float(mean), "scale": float(sd)},
    )


def discrete(values, probabilities) -> StepDistribution:
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise DistributionError("discrete values must be one-dimensional")
    if not np.all(np.isfinite(values)):
        raise DistributionError("discrete values must be finite")
    return _finite("discrete", values, probabilities, params={"descriptor": "discrete"})


def _read_discrete_csv(path: str) -> StepDistribution:
    values, probs = [], []
    try:
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                if len(row) != 2:
                    raise DistributionError(f"{path}: expected two columns, got {row}")
                try:
                    values.append(float(row[0]))
                    probs.append(float(row[1]))
                except ValueError:
                    if values:  # only a leading header row may be non-numeric
                        raise DistributionError(f"{path}: non-numeric row {row}") from None
    except OSError as exc:
        raise DistributionError(f"cannot read {path}: {exc}") from exc
    dist = discrete(values, probs)
    dist.params["descriptor"] = f"discrete:{path}"
    return dist


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise DistributionError(f"malformed {what} parameters: {text!r}") from None


def make_distribution(spec) -> StepDistribution:
    """Build a law from a descriptor string or a mapping.

    Strings: ``rademacher``, ``gaussian:MEAN,SD``, ``lattice:D``,
    ``indicator:x1,x2,...``, ``discrete:PATH`` (CSV ``value,probability``).
    Mappings use the same names under ``kind``, e.g.
    ``{"kind": "discrete", "values": [...], "probabilities": [...]}``.
    """
    if isinstance(spec, StepDistribution):
        return spec
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "rademacher":
            return rademacher()
        if kind == "gaussian":
            return gaussian(spec.get("mean", 0.0), spec.get("sd", 1.0))
        if kind in ("lattice", "lattice_isotropic"):
            return lattice_isotropic(spec["d"])
        if kind in ("indicator", "indicator_grid"):
            return indicator_grid(spec["grid"])
        if kind == "discrete":
            return discrete(spec["values"], spec["probabilities"])
        raise DistributionError(f"unknown distribution kind {kind!r}")
    if not isinstance(spec, str):
        raise DistributionError(f"unsupported descriptor {spec!r}")
    name, _, rest = spec.strip().partition(":")
    name = name.strip().lower()
    if name == "rademacher" and not rest:
        return rademacher()
    if name == "gaussian":
        vals = _floats(rest, "gaussian") if rest else [0.0, 1.0]
        if len(vals) != 2:
            raise DistributionError("gaussian descriptor is gaussian:MEAN,SD")
        return gaussian(*vals)
    if name == "lattice":
        try:
            return lattice_isotropic(int(rest))
        except ValueError:
            raise DistributionError(f"lattice descriptor needs an integer, got {rest!r}") from None
    if name == "indicator":
        return indicator_grid(_floats(rest, "indicator"))
    if name == "discrete" and rest:
        return _read_discrete_csv(rest.strip())
    raise DistributionError(f"unknown distribution descriptor {spec!r}")


def sample_step(d: StepDistribution, stream: RandomStream) -> np.ndarray:
    """One variate of law mu as a length-``dim`` vector; advances the stream."""
    return d.sample(stream.generator, 1)[0]


# ---------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------


def _gaussian_window(m: float, s: float, b: float) -> tuple[float, float, float]:
    """E[1], E[X 1], E[X^2 1] over {|X| <= b} for X ~ N(m, s^2)."""
    if s == 0.0:
        inside = abs(m) <= b
        return (1.0, m, m * m) if inside else (0.0, 0.0, 0.0)
    lo, hi = (-b - m) / s, (b - m) / s
    p0 = _Phi(hi) - _Phi(lo)
    z1 = _phi(lo) - _phi(hi)
    z2 = p0 + lo * _phi(lo) - hi * _phi(hi)
    return p0, m * p0 + s * z1, m * m * p0 + 2.0 * m * s * z1 + s * s * z2


def _require_1d(d: StepDistribution, b: float) -> None:
    if d.dim != 1:
        raise DistributionError("truncation is defined for one-dimensional steps only")
    if not b > 0.0:
        raise DistributionError(f"truncation level must be positive, got {b}")


def _truncated_pair(d: StepDistribution, b: float) -> tuple[StepDistribution, StepDistribution]:
    if d.finite_support:
        x = d.support[:, 0]
        keep = np.abs(x) <= b
        inside = np.where(keep, x, 0.0)
        shift = float(d.probs @ inside)
        low = discrete(inside - shift, d.probs)
        high = discrete(np.where(keep, 0.0, x) + shift, d.probs)
        return _merge_atoms(low), _merge_atoms(high)
    if d.kind != "gaussian":
        raise DistributionError(f"truncation not available for {d.kind}")
    m, s = d.params["loc"], d.params["scale"]
    p0, e1, e2 = _gaussian_window(m, s, b)
    var_in = e2 - e1 * e1
    # outside window moments by complement
    e1_out = m - e1
    e2_out = m * m + s * s - e2
    var_out = e2_out - e1_out * e1_out
    common = {"loc": m, "scale": s, "b": float(b)}
    low = StepDistribution(
        kind="gaussian_truncated",
        dim=1,
        mean=np.zeros(1),
        covariance=np.array([[max(var_in, 0.0)]]),
        bound=b + abs(e1),
        params={**common, "shift": e1, "descriptor": f"{d.describe()}|<= {b!r}"},
    )
    high = StepDistribution(
        kind="gaussian_residual",
        dim=1,
        mean=np.array([e1 + e1_out]),
        covariance=np.array([[max(var_out, 0.0)]]),
        bound=math.inf,
        params={**common, "shift": e1, "descriptor": f"{d.describe()}|> {b!r}"},
    )
    return low, high


def _merge_atoms(d: StepDistribution) -> StepDistribution:
    values = d.support[:, 0]
    uniq, inv = np.unique(values, return_inverse=True)
    probs = np.array([math.fsum(d.probs[inv == i]) for i in range(len(uniq))])
    keep = probs > 0.0
    return discrete(uniq[keep], probs[keep] / math.fsum(probs[keep]))


def truncate_distribution(d: StepDistribution, b: float) -> tuple[StepDistribution, float, float]:
    """Law of X 1{|X| <= b} - E(X 1{|X| <= b}), with sigma_b and zeta_b.

    ``zeta_b`` is the standard deviation of the residual X - X^(b).
    """
    _require_1d(d, b)
    low, high = _truncated_pair(d, b)
    return low, math.sqrt(low.variance), math.sqrt(high.variance)


def residual_distribution(d: StepDistribution, b: float) -> StepDistribution:
    """Law of X - X^(b) = X 1{|X| > b} + E(X 1{|X| <= b})."""
    _require_1d(d, b)
    return _truncated_pair(d, b)[1]
