import csv
import io
import math

import numpy as np
import pytest

from reinforced_walk.engine import (
    erw_param_map,
    iid_walk,
    merw_param_map,
    reinforced_latents,
    simulate_erw,
    simulate_merw,
    simulate_reinforced_path,
)
from reinforced_walk.exact import enumerate_erw_pmf, enumerate_exact_pmf, enumerate_merw_pmf
from reinforced_walk.fluctuation import estimate_W, simulate_paths
from reinforced_walk.steps import RandomStream, gaussian, indicator_grid, lattice_isotropic, rademacher


def _stream_with_first(make_path, want, seed=0):
    for sid in range(100):
        if np.array_equal(make_path(RandomStream(seed, sid)).first_step, want):
            return sid
    raise AssertionError("no stream found")


def test_p1_copies_first_step():
    sid = _stream_with_first(lambda s: simulate_reinforced_path(rademacher(), 1.0, 5, None, s), [1.0])
    path = simulate_reinforced_path(rademacher(), 1.0, 5, range(1, 6), RandomStream(0, sid))
    assert path.sum_at(5)[0] == 5.0
    assert [path.sum_at(n)[0] for n in range(1, 6)] == [1, 2, 3, 4, 5]


@pytest.mark.parametrize("d", [rademacher(), gaussian(0.3, 2.0), lattice_isotropic(3), indicator_grid([0.2, 0.7])])
def test_p0_is_iid_walk(d):
    cps = [1, 7, 100, 999]
    a = simulate_reinforced_path(d, 0.0, 999, cps, RandomStream(4, 4))
    b = iid_walk(d, 999, cps, RandomStream(4, 4))
    assert np.array_equal(a.sums, b.sums)
    assert np.array_equal(a.squared_sums, b.squared_sums)


def test_n2_frequency():
    R = 10**5
    batch = simulate_paths(rademacher(), 0.6, 2, (2,), R, master_seed=31)
    freq = float(np.mean(batch.sums[:, 0, 0] == 2.0))
    assert abs(freq - 0.4) <= 3 * math.sqrt(0.4 * 0.6 / R)


def test_reproducible_and_monotone():
    d = lattice_isotropic(2)
    a = simulate_reinforced_path(d, 0.7, 5000, [10, 100, 5000], RandomStream(9, 1))
    b = simulate_reinforced_path(d, 0.7, 5000, [10, 100, 5000], RandomStream(9, 1))
    assert np.array_equal(a.sums, b.sums) and np.array_equal(a.terminal_martingale, b.terminal_martingale)
    assert np.all(np.diff(a.squared_sums, axis=0) >= 0)


def test_atomic_vector_recall():
    # with one coin per step a recalled lattice step is a whole unit vector
    d = lattice_isotropic(3)
    latent, src = reinforced_latents(d, 0.9, 2000, RandomStream(1, 1).generator)
    steps = d.steps_from_latent(latent)
    assert np.all(np.sum(np.abs(steps), axis=1) == 1.0)
    assert np.all(src <= np.arange(2000))
    assert np.array_equal(latent, latent[src])


def test_checkpoint_validation():
    with pytest.raises(ValueError):
        simulate_reinforced_path(rademacher(), 0.5, 10, [0, 5])
    with pytest.raises(ValueError):
        simulate_reinforced_path(rademacher(), 0.5, 10, [11])
    with pytest.raises(ValueError):
        simulate_reinforced_path(rademacher(), 1.5, 10)
    path = simulate_reinforced_path(rademacher(), 0.5, 10, [3])
    with pytest.raises(KeyError):
        path.sum_at(4)


def test_csv_layout():
    path = simulate_reinforced_path(lattice_isotropic(2), 0.5, 50, [1, 25, 50], RandomStream(3, 3))
    rows = list(csv.reader(io.StringIO(path.to_csv())))
    assert rows[0] == ["n", "S_1", "S_2", "V_1", "V_2", "M_terminal_flag"]
    assert [r[0] for r in rows[1:]] == ["1", "25", "50"]
    assert [r[-1] for r in rows[1:]] == ["0", "0", "1"]
    g = simulate_reinforced_path(gaussian(0, 1), 0.5, 20, [20], RandomStream(3, 3))
    value = g.to_csv().splitlines()[1].split(",")[1]
    assert float(value) == g.sums[0, 0]


def test_squared_step_lln():
    # V_N / N -> sigma^2; spread across paths gives the standard error
    N, R = 10**5, 200
    ratios = []
    for i in range(R):
        path = simulate_reinforced_path(gaussian(0, 1), 0.75, N, None, RandomStream(77, i))
        ratios.append(path.squared_sums[-1, 0] / N)
    ratios = np.array(ratios)
    se = ratios.std(ddof=1) / math.sqrt(R)
    assert abs(ratios.mean() - 1.0) <= 4 * se


# --- elephant walks ------------------------------------------------------------


def test_param_maps():
    assert erw_param_map(0.5) == 0.75
    assert erw_param_map(0.6) == pytest.approx(0.8)
    assert erw_param_map(1.0) == 1.0
    assert merw_param_map(0.6, 2) == pytest.approx(0.7)
    for p in (0.1, 0.5, 0.9):
        assert merw_param_map(p, 1) == pytest.approx(erw_param_map(p))
    for d in (1, 2, 5):
        assert merw_param_map(0.0, d) == pytest.approx(1 / (2 * d))


def test_erw_q1_straight():
    sid = _stream_with_first(lambda s: simulate_erw(1.0, 4, None, s), [-1.0])
    path = simulate_erw(1.0, 4, [4], RandomStream(0, sid))
    assert path.sums[0, 0] == -4.0


def test_merw_q1_straight():
    for sid in range(5):
        path = simulate_merw(1.0, 2, 30, range(1, 31), RandomStream(0, sid))
        first = path.first_step
        assert np.array_equal(path.sums, np.outer(np.arange(1, 31), first))


def _empirical_pmf(sums):
    keys, counts = np.unique(sums, axis=0, return_counts=True)
    R = len(sums)
    return {tuple(k) if len(k) > 1 else float(k[0]): c / R for k, c in zip(keys, counts)}


def _within_binomial_se(emp, exact, R, z=4.0):
    for k in set(emp) | set(exact):
        p = exact.get(k, 0.0)
        se = math.sqrt(max(p * (1 - p), 1e-12) / R)
        assert abs(emp.get(k, 0.0) - p) <= z * se, k


def test_erw_sampler_matches_enumeration():
    R = 20000
    sums = np.array([simulate_erw(0.8, 4, [4], RandomStream(5, i)).sums[0] for i in range(R)])
    _within_binomial_se(_empirical_pmf(sums), enumerate_erw_pmf(0.8, 4), R)


def test_merw_sampler_matches_enumeration():
    R = 20000
    sums = np.array([simulate_merw(0.7, 2, 4, [4], RandomStream(6, i)).sums[0] for i in range(R)])
    _within_binomial_se(_empirical_pmf(sums), enumerate_merw_pmf(0.7, 2, 4), R)


def test_reinforced_sampler_matches_enumeration():
    R = 20000
    sums = np.array(
        [simulate_reinforced_path(lattice_isotropic(2), 0.6, 4, [4], RandomStream(8, i)).sums[0] for i in range(R)]
    )
    _within_binomial_se(_empirical_pmf(sums), enumerate_exact_pmf(lattice_isotropic(2), 0.6, 4), R)


def test_erw_half_is_simple_walk():
    N, R = 1000, 4000
    s = np.array([simulate_erw(0.5, N, [N], RandomStream(12, i)).sums[0, 0] for i in range(R)])
    # fourth moment of a simple walk: 3N^2 - 2N, so Var(S^2) = 2N^2 - 2N
    se = math.sqrt((2 * N * N - 2 * N) / R)
    assert abs(np.mean(s * s) - N) <= 4 * se


# --- terminal martingale -------------------------------------------------------


def test_terminal_martingale_p1():
    for N in (1, 2, 17, 300):
        sid = _stream_with_first(lambda s: simulate_reinforced_path(rademacher(), 1.0, N, None, s), [1.0])
        path = simulate_reinforced_path(rademacher(), 1.0, N, None, RandomStream(0, sid))
        assert estimate_W(path)[0] == pytest.approx(1.0, rel=1e-12)


def test_terminal_martingale_n1():
    d = gaussian(0.4, 1.0)
    path = simulate_reinforced_path(d, 0.5, 1, None, RandomStream(2, 2))
    assert estimate_W(path, d.mean)[0] == pytest.approx(path.first_step[0] - 0.4, abs=1e-15)
    assert path.terminal_martingale[0] == pytest.approx(path.first_step[0] - 0.4, abs=1e-15)
