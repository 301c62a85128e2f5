"""Command-line front end.

Exit codes: 0 all checks passed, 1 a statistical or oracle check failed,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .bridge import GridSpec, bridge_fluctuation_ensemble
from .engine import erw_param_map, merw_param_map, simulate_reinforced_path
from .exact import MAX_ENUMERATION_N, enumerate_erw_pmf, enumerate_exact_pmf, enumerate_merw_pmf, pmf_distance, pmf_moments
from .fluctuation import (
    BudgetExceeded,
    EnsembleSpec,
    cramer_wold_project,
    default_workers,
    random_directions,
    run_ensemble,
    simulate_paths,
)
from .numerics import (
    a_seq,
    centering_discrepancy,
    exact_second_moment,
    limit_variance_W,
    v_exact,
)
from .stats import DEFAULT_ALPHA, covariance_compare, ks_test, moment_z_test
from .steps import DistributionError, RandomStream, indicator_grid, make_distribution

log = logging.getLogger("reinforced_walk")

SCHEMA = 1
EQUIVALENCE_TOL = 1e-12
CROSS_CHECK_TOL = 1e-10
MAX_EQUIVALENCE_N = 4

# Runtime-only fields; everything else in a report is reproducible.
RUNTIME_KEY = "runtime"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str = ""
    dist: str = "rademacher"
    p: float | None = None
    q: float | None = None
    n: str | None = None
    checkpoints: str | None = None
    horizon: int | None = None
    paths: int | None = None
    seed: int = 20240601
    stream: int = 0
    workers: int | None = None
    grid: str | None = None
    out: str | None = None
    format: str | None = None
    alpha: float = DEFAULT_ALPHA
    variance_limit: bool = False
    classical: bool = False
    config: str | None = None
    extra: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """Reproducible part of the configuration (no output path or worker count)."""
        skip = {"out", "workers", "config", "extra"}
        return {k: v for k, v in asdict(self).items() if k not in skip}


_FIELD_TYPES = {
    "p": float,
    "q": float,
    "horizon": int,
    "paths": int,
    "seed": int,
    "stream": int,
    "workers": int,
    "alpha": float,
    "variance_limit": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
    "classical": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
}


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    known = {f.name for f in fields(RunConfig)} - {"extra", "config", "subcommand"}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        conv = _FIELD_TYPES.get(key, str)
        try:
            out[key] = conv(value.strip())
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value.strip()!r}") from None
    return out


def _int_list(text: str | None, what: str) -> list[int]:
    if text is None:
        return []
    try:
        vals = [int(float(t)) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{what} must be a comma-separated list of integers, got {text!r}") from None
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--dist", help="rademacher | gaussian:M,SD | lattice:D | indicator:x1,.. | discrete:PATH")
    common.add_argument("--p", type=float, help="reinforcement parameter")
    common.add_argument("--q", type=float, help="elephant memory parameter")
    common.add_argument("--n", help="index or comma-separated indices")
    common.add_argument("--checkpoints", help="comma-separated checkpoint indices")
    common.add_argument("--horizon", type=int, help="simulation horizon N")
    common.add_argument("--paths", type=int, help="number of paths R")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--stream", type=int, help="stream id for a single path")
    common.add_argument("--workers", type=int, help="worker processes (default: available CPUs)")
    common.add_argument("--grid", help="sorted grid points in (0, 1)")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--alpha", type=float, help="KS test level")
    common.add_argument("--variance-limit", action="store_true", default=None, help="report 1/(2p-1) only")
    common.add_argument("--classical", action="store_true", default=None, help="p = 0 Donsker baseline")
    common.add_argument("-v", "--verbose", action="store_true", default=None)

    parser = argparse.ArgumentParser(
        prog="reinforced-walk",
        description="Step-reinforced random walks: simulation and limit-theorem checks",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, helptext in (
        ("simulate", "simulate one reinforced path and write checkpoint rows"),
        ("fluct", "fluctuation ensemble against the exact Gaussian target"),
        ("bridge", "reinforced empirical process against the bridge covariance"),
        ("exact", "exact tables of a_n, m_n, v_exact and related constants"),
        ("enumerate", "exact pmf of S_n for small n"),
        ("equivalence", "reinforced walk vs elephant walk pmfs"),
    ):
        sub.add_parser(name, parents=[common], help=helptext)
    return parser


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    values = {}
    if ns.config:
        values.update(read_config_file(ns.config))
    for f in fields(RunConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            values[f.name] = v
    values["subcommand"] = ns.subcommand
    cfg = RunConfig(**{k: v for k, v in values.items() if k in {f.name for f in fields(RunConfig)}})
    return cfg


def _emit(text: str, cfg: RunConfig) -> None:
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _report_header(cfg: RunConfig) -> dict:
    return {
        "schema": SCHEMA,
        "version": __version__,
        "subcommand": cfg.subcommand,
        "config": cfg.echo(),
        "master_seed": cfg.seed,
    }


def _require_p(cfg: RunConfig, lo: float, hi: float, *, open_interval: bool) -> float:
    if cfg.p is None:
        raise ConfigError("--p is required")
    p = cfg.p
    ok = lo < p < hi if open_interval else lo <= p <= hi
    if not ok or not math.isfinite(p):
        bounds = f"({lo}, {hi})" if open_interval else f"[{lo}, {hi}]"
        raise ConfigError(f"p must lie in {bounds} for {cfg.subcommand}, got {p}")
    return p


def _workers(cfg: RunConfig) -> int:
    w = cfg.workers if cfg.workers is not None else default_workers()
    if w < 1:
        raise ConfigError(f"workers must be positive, got {w}")
    return w


def _alpha(cfg: RunConfig) -> float:
    if not 0.0 < cfg.alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {cfg.alpha}")
    return cfg.alpha


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> int:
    p = _require_p(cfg, 0.0, 1.0, open_interval=False)
    dist = make_distribution(cfg.dist)
    N = cfg.horizon
    if N is None or N < 1:
        raise ConfigError("--horizon must be a positive integer")
    cps = _int_list(cfg.checkpoints, "checkpoints")
    if not cps:
        if N <= 1024:
            cps = list(range(1, N + 1))
        else:
            cps = sorted({1 << k for k in range(N.bit_length()) if 1 << k <= N} | {N})
    if min(cps) < 1 or max(cps) > N:
        raise ConfigError(f"checkpoints must lie in [1, {N}]")
    cps = sorted(set(cps) | {N})
    path = simulate_reinforced_path(dist, p, N, cps, RandomStream(cfg.seed, cfg.stream))
    if cfg.format == "json":
        doc = _report_header(cfg)
        doc["rows"] = [
            {
                "n": n,
                "S": path.sums[i].tolist(),
                "V": path.squared_sums[i].tolist(),
                "a_n": a_seq(p, n),
                "terminal": n == N,
            }
            for i, n in enumerate(path.checkpoints)
        ]
        doc["terminal_martingale"] = path.terminal_martingale.tolist()
        _emit(_dumps(doc), cfg)
    else:
        _emit(path.to_csv(a_values=True), cfg)
    return 0


def _ensemble_params(cfg: RunConfig, default_cps: str = "1024") -> tuple[list[int], int, int]:
    cps = _int_list(cfg.checkpoints or cfg.n or default_cps, "checkpoints")
    N = cfg.horizon if cfg.horizon is not None else 131072
    R = cfg.paths if cfg.paths is not None else 4000
    if R < 8:
        raise ConfigError(f"paths must be at least 8, got {R}")
    return cps, N, R


def cmd_fluct(cfg: RunConfig) -> int:
    p = _require_p(cfg, 0.5, 1.0, open_interval=True)
    alpha = _alpha(cfg)
    workers = _workers(cfg)
    dist = make_distribution(cfg.dist)
    cps, N, R = _ensemble_params(cfg)
    directions = random_directions(dist.dim, 8, cfg.seed) if dist.dim > 1 else []
    try:
        spec = EnsembleSpec(dist, p, tuple(cps), N, R, cfg.seed, tuple(map(tuple, directions)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    t0 = time.perf_counter()
    ens = run_ensemble(spec, workers)
    elapsed = time.perf_counter() - t0

    tests = []
    cov = dist.covariance
    axes = [tuple(float(v) for v in np.eye(dist.dim)[c]) for c in range(dist.dim)]
    for j, n in enumerate(spec.checkpoints):
        for c in range(dist.dim):
            target = ens.v_exact[j] * cov[c, c]
            f = ens.F[:, j, c]
            if target > 0.0:
                ks = ks_test(np.sort(f / math.sqrt(target)), name=f"ks n={n} coord={c}", alpha=alpha, seed=cfg.seed)
                tests.append(ks.to_dict())
            mz = moment_z_test(f, 0.0, target, name=f"moments n={n} coord={c}", seed=cfg.seed)
            tests.append(mz.to_dict())
        for a in directions:
            if a in axes:
                continue
            samples, targets = cramer_wold_project(ens, a)
            ks = ks_test(
                np.sort(samples[:, j] / math.sqrt(targets[j])),
                name=f"ks n={n} direction={[round(v, 6) for v in a]}",
                alpha=alpha,
                seed=cfg.seed,
            )
            tests.append(ks.to_dict())

    summary = ens.summary()
    for row in summary:
        tv = row["target_variance"]
        row["relative_variance_error"] = [s / t - 1.0 if t > 0 else 0.0 for s, t in zip(row["sample_variance"], tv)]
    doc = _report_header(cfg)
    doc.update(
        {
            "distribution": {"descriptor": dist.describe(), "mean": dist.mean.tolist(), "covariance": cov.tolist()},
            "limit_variance": (ens.limit_variance * np.diag(cov)).tolist(),
            "checkpoints": summary,
            "tests": tests,
            "all_pass": all(t["pass"] for t in tests),
            RUNTIME_KEY: {"elapsed_seconds": elapsed, "workers": workers},
        }
    )
    _emit(_dumps(doc), cfg)
    return 0 if doc["all_pass"] else 1


def cmd_bridge(cfg: RunConfig) -> int:
    if cfg.grid is None:
        raise ConfigError("--grid is required")
    try:
        grid = GridSpec.parse(cfg.grid)
    except (DistributionError, ValueError) as exc:
        raise ConfigError(f"bad grid {cfg.grid!r}: {exc}") from exc
    alpha = _alpha(cfg)
    workers = _workers(cfg)
    cps, N, R = _ensemble_params(cfg)
    if len(cps) != 1:
        raise ConfigError("bridge takes a single checkpoint n")
    n = cps[0]
    doc = _report_header(cfg)
    doc["grid"] = list(grid.points)
    sigma = indicator_grid(grid.points).covariance
    tests = []
    t0 = time.perf_counter()
    if cfg.classical:
        # p = 0: classical empirical process, covariance x_i (1 - x_j)
        if R < 100:
            raise ConfigError("covariance comparison needs at least 100 paths")
        batch = simulate_paths(indicator_grid(grid.points), 0.0, n, (n,), R, cfg.seed, workers)
        G = batch.sums[:, batch.checkpoints.index(n), :] / math.sqrt(n)
        cc = covariance_compare(G, sigma, name="classical covariance", seed=cfg.seed)
        tests.append(cc.to_dict())
        doc["mode"] = "classical"
    else:
        p = _require_p(cfg, 0.5, 1.0, open_interval=True)
        if R < 100:
            raise ConfigError("covariance comparison needs at least 100 paths")
        try:
            ens = bridge_fluctuation_ensemble(grid, p, n, N, R, cfg.seed, workers)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        target = ens.target_covariance(0)
        cc = covariance_compare(ens.F[:, 0, :], target, name="bridge covariance", seed=cfg.seed)
        tests.append(cc.to_dict())
        for j, x in enumerate(grid.points):
            ks = ks_test(
                np.sort(ens.F[:, 0, j] / math.sqrt(target[j, j])), name=f"ks x={x!r}", alpha=alpha, seed=cfg.seed
            )
            tests.append(ks.to_dict())
        doc["mode"] = "reinforced"
        doc["v_exact"] = ens.v_exact[0]
        doc["limit_covariance"] = (sigma / (2.0 * p - 1.0)).tolist()
        doc["covariance_table"] = [
            {
                "i": i,
                "j": j,
                "target": target[i, j],
                "sample": cc.details["sample_covariance"][i][j],
                "standard_error": cc.details["standard_error"][i][j],
                "z": cc.details["z"][i][j],
            }
            for i in range(len(grid))
            for j in range(i, len(grid))
        ]
    doc["tests"] = tests
    doc["all_pass"] = all(t["pass"] for t in tests)
    doc[RUNTIME_KEY] = {"elapsed_seconds": time.perf_counter() - t0, "workers": workers}
    _emit(_dumps(doc), cfg)
    return 0 if doc["all_pass"] else 1


def cmd_exact(cfg: RunConfig) -> int:
    p = _require_p(cfg, 0.0, 1.0, open_interval=False)
    superdiffusive = 0.5 < p < 1.0
    doc = {"schema": SCHEMA, "version": __version__, "subcommand": "exact", "p": p}
    if cfg.variance_limit:
        if not superdiffusive:
            raise ConfigError("the variance limit 1/(2p-1) needs p in (1/2, 1)")
        doc["variance_limit"] = 1.0 / (2.0 * p - 1.0)
        _emit(_dumps(doc), cfg)
        return 0
    ns = _int_list(cfg.n or "1", "n")
    if not ns or min(ns) < 1:
        raise ConfigError("--n must list positive indices")
    N = cfg.horizon if cfg.horizon is not None else 128 * max(ns)
    if N < max(ns):
        raise ConfigError(f"horizon {N} is below the largest requested n {max(ns)}")
    rows = [
        {
            "n": n,
            "a_n": a_seq(p, n),
            "m_n": exact_second_moment(p, n),
            "v_exact": v_exact(p, n, N),
            "centering_discrepancy": centering_discrepancy(p, n),
        }
        for n in ns
    ]
    if cfg.format == "csv":
        lines = ["n,a_n,m_n,v_exact,centering_discrepancy"]
        for r in rows:
            lines.append(",".join(format(r[k], ".17g") if k != "n" else str(r[k]) for k in r))
        _emit("\n".join(lines) + "\n", cfg)
        return 0
    doc["horizon"] = N
    doc["rows"] = rows
    if superdiffusive:
        lv = limit_variance_W(p)
        doc["variance_limit"] = 1.0 / (2.0 * p - 1.0)
        doc["var_W"] = {"value": lv.value, "lower": lv.lower, "upper": lv.upper}
    _emit(_dumps(doc), cfg)
    return 0


def cmd_enumerate(cfg: RunConfig) -> int:
    p = _require_p(cfg, 0.0, 1.0, open_interval=False)
    dist = make_distribution(cfg.dist)
    if not dist.finite_support:
        raise ConfigError(f"{dist.describe()} has no finite support; enumeration needs one")
    ns = _int_list(cfg.n or "1", "n")
    if len(ns) != 1 or not 1 <= ns[0] <= MAX_ENUMERATION_N:
        raise ConfigError(f"--n must be a single index in [1, {MAX_ENUMERATION_N}]")
    n = ns[0]
    pmf = enumerate_exact_pmf(dist, p, n)
    mean, cov = pmf_moments(pmf)
    expected = a_seq(p, n) ** 2 * exact_second_moment(p, n) * dist.covariance
    mismatch = float(np.max(np.abs(cov - expected)))
    if dist.dim == 1:
        lines = ["value,probability"] + [f"{v:.17g},{w:.17g}" for v, w in pmf.items()]
    else:
        head = ",".join(f"v{j + 1}" for j in range(dist.dim))
        lines = [f"{head},probability"] + [",".join(f"{x:.17g}" for x in v) + f",{w:.17g}" for v, w in pmf.items()]
    _emit("\n".join(lines) + "\n", cfg)
    print(f"mean = {mean.tolist()}", file=sys.stderr)
    print(f"covariance = {cov.tolist()}", file=sys.stderr)
    print(f"a_n^2 m_n Sigma = {expected.tolist()} (max mismatch {mismatch:.3g})", file=sys.stderr)
    return 0 if mismatch <= CROSS_CHECK_TOL else 1


def cmd_equivalence(cfg: RunConfig) -> int:
    p = _require_p(cfg, 0.0, 1.0, open_interval=True)
    dist = make_distribution(cfg.dist)
    if dist.kind == "rademacher":
        dim = 1
        mapped = erw_param_map(p)
    elif dist.kind == "lattice_isotropic":
        dim = dist.dim
        mapped = merw_param_map(p, dim)
    else:
        raise ConfigError("equivalence needs --dist rademacher or lattice:D")
    q = cfg.q if cfg.q is not None else mapped
    if not 0.0 <= q <= 1.0:
        raise ConfigError(f"q must lie in [0, 1], got {q}")
    ns = _int_list(cfg.n or str(MAX_EQUIVALENCE_N), "n")
    if len(ns) != 1 or not 1 <= ns[0] <= MAX_EQUIVALENCE_N:
        raise ConfigError(f"--n must be a single index in [1, {MAX_EQUIVALENCE_N}]")
    rows = []
    for m in range(1, ns[0] + 1):
        reinforced = enumerate_exact_pmf(dist, p, m)
        elephant = enumerate_erw_pmf(q, m) if dim == 1 else enumerate_merw_pmf(q, dim, m)
        rows.append({"n": m, "max_abs_difference": pmf_distance(reinforced, elephant)})
    worst = max(r["max_abs_difference"] for r in rows)
    doc = {
        "schema": SCHEMA,
        "version": __version__,
        "subcommand": "equivalence",
        "p": p,
        "q": q,
        "q_from_map": mapped,
        "dim": dim,
        "rows": rows,
        "max_abs_difference": worst,
        "tolerance": EQUIVALENCE_TOL,
        "pass": worst <= EQUIVALENCE_TOL,
    }
    _emit(_dumps(doc), cfg)
    return 0 if doc["pass"] else 1


COMMANDS = {
    "simulate": cmd_simulate,
    "fluct": cmd_fluct,
    "bridge": cmd_bridge,
    "exact": cmd_exact,
    "enumerate": cmd_enumerate,
    "equivalence": cmd_equivalence,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(ns)
        return COMMANDS[cfg.subcommand](cfg)
    except (ValueError, BudgetExceeded) as exc:  # ConfigError, DistributionError included
        print(f"reinforced-walk {ns.subcommand}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
