import itertools
import math

import numpy as np
import pytest

from gbrkit.distributions import br_cdf_airy
from gbrkit.errors import DomainError
from gbrkit.lpp_sim import (
    LatticeConfig,
    batch_last_passage,
    boundary_process_probe,
    dkw_radius,
    ecdf_rescaled,
    exit_from_geodesic,
    exit_tail,
    gen_weight_batch,
    gen_weights,
    last_passage,
    last_passage_with_geodesic,
    simulate,
    stationarity_test,
    thin_lpp,
    wilson_interval,
)


def brute_force(w):
    """Max over all up-right paths, listed as step sequences."""
    C, R = w.shape
    best = -np.inf
    for rights in itertools.combinations(range(C + R - 2), C - 1):
        c = r = 0
        total = w[0, 0]
        for step in range(C + R - 2):
            if step in rights:
                c += 1
            else:
                r += 1
            total += w[c, r]
        best = max(best, total)
    return best


# --- weights -----------------------------------------------------------------------

def test_thick_corner_block_is_exactly_zero():
    cfg = LatticeConfig(4, 5, 2, 3, (0.1, 0.3), (0.2, -0.1, 0.4), seed=3)
    w = gen_weights(cfg, 7)
    assert w.shape == (6, 8)
    assert np.all(w[:2, :3] == 0.0)
    assert np.all(w[2:, :] > 0) and np.all(w[:, 3:] > 0)


def test_stationary_corner_weights():
    cfg = LatticeConfig(3, 3, 2, 2, (0.2, 0.5), (-0.2, 0.1), "stationary", seed=3)
    w = gen_weights(cfg, 0)
    assert w[0, 0] == 0.0
    assert np.all(w[:2, :2][np.array([[False, True], [True, True]])] > 0)


def test_stationary_domain_check():
    with pytest.raises(DomainError):
        LatticeConfig(3, 3, 2, 2, (0.1, 0.1), (-0.1, -0.1), "stationary")


def test_bulk_and_boundary_means():
    cfg = LatticeConfig(1, 1, 1, 1, (0.3,), (0.1,), seed=11)
    w = gen_weight_batch(cfg, 0, 100000)
    assert w[:, 1, 1].mean() == pytest.approx(1.0, abs=0.02)
    assert w[:, 0, 1].mean() == pytest.approx(1 / 0.8, abs=0.03)
    assert w[:, 1, 0].mean() == pytest.approx(1 / 0.6, abs=0.03)


def test_geometric_mean():
    q = 0.4
    cfg = LatticeConfig(1, 1, 1, 1, (0.5,), (0.5,), "geometric", seed=2, q=q)
    w = gen_weight_batch(cfg, 0, 100000)
    sigma = math.sqrt(q) / (1 - q)
    assert abs(w[:, 1, 1].mean() - q / (1 - q)) <= 3 * sigma / math.sqrt(1e5)
    assert np.all(w == np.floor(w))
    g = math.sqrt(q) * 0.5
    assert abs(w[:, 0, 1].mean() - g / (1 - g)) <= 3 * math.sqrt(g) / (1 - g) / math.sqrt(1e5)


def test_seeded_determinism():
    cfg = LatticeConfig(5, 5, 1, 1, (0.0,), (0.0,), seed=42)
    assert np.array_equal(gen_weights(cfg, 3), gen_weights(cfg, 3))
    assert not np.array_equal(gen_weights(cfg, 3), gen_weights(cfg, 4))
    a = simulate(cfg, 300)
    assert np.array_equal(a, simulate(cfg, 300))
    assert np.array_equal(a, simulate(cfg, 300, threads=3))
    assert np.array_equal(a[100:], simulate(cfg, 200, start=100))
    other = LatticeConfig(5, 5, 1, 1, (0.0,), (0.0,), seed=43)
    assert not np.array_equal(a, simulate(other, 300))


def test_batch_matches_single_draws():
    cfg = LatticeConfig(3, 4, 2, 1, (0.1, 0.2), (0.3,), seed=8)
    batch = gen_weight_batch(cfg, 5, 3)
    for t in range(3):
        assert np.array_equal(batch[t], gen_weights(cfg, 5 + t))


# --- last passage --------------------------------------------------------------------

def test_single_site():
    assert last_passage(np.array([[2.5]])) == 2.5


def test_two_by_two_example():
    rows = np.array([[1.0, 2.0], [3.0, 4.0]])  # row-major from the origin
    assert last_passage(rows.T) == 8.0
    assert last_passage(rows) == 8.0


def test_dp_matches_brute_force():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        for C in range(1, 6):
            for R in range(1, 6):
                w = rng.exponential(size=(C, R))
                assert last_passage(w) == pytest.approx(brute_force(w), rel=1e-14)


def test_monotone_in_each_weight():
    rng = np.random.default_rng(9)
    for _ in range(30):
        w = rng.exponential(size=(6, 5))
        base = last_passage(w)
        c, r = rng.integers(0, 6), rng.integers(0, 5)
        w[c, r] += rng.exponential()
        assert last_passage(w) >= base


def one_sided_values(w, ell, kay):
    """Best value through the boundary rows and through the boundary columns, separately."""
    row_side = w[ell - 1:, :].copy()
    row_side[0, kay:] = -1e300  # leave the zero corner to the right only
    col_side = w[:, kay - 1:].copy()
    col_side[ell:, 0] = -1e300
    return last_passage(row_side), last_passage(col_side)


def test_max_decomposition_exact():
    for seed in range(20):
        cfg = LatticeConfig(5, 4, 2, 3, (0.1, 0.4), (0.2, 0.0, 0.3), seed=seed)
        w = gen_weights(cfg, 0)
        a, b = one_sided_values(w, 2, 3)
        assert last_passage(w) == max(a, b)
        run = last_passage_with_geodesic(w, 2, 3)
        assert (run.exit > 0) == (a >= b)


def test_geodesic_is_up_right_and_consistent():
    for seed in range(10):
        cfg = LatticeConfig(6, 5, 2, 2, (0.0, 0.3), (0.1, 0.2), seed=seed)
        w = gen_weights(cfg, 0)
        run = last_passage_with_geodesic(w, 2, 2)
        g = run.geodesic
        assert g[0] == (-1, -1) and g[-1] == (6, 5)
        steps = {(b[0] - a[0], b[1] - a[1]) for a, b in zip(g, g[1:])}
        assert steps <= {(1, 0), (0, 1)}
        total = sum(w[i + 1, j + 1] for i, j in g)
        assert total == pytest.approx(run.L, rel=1e-14)
        assert run.L == pytest.approx(last_passage(w), rel=1e-14)
        assert exit_from_geodesic(g) == run.exit
        assert run.exit != 0


def test_batch_exits_match_backtracking():
    cfg = LatticeConfig(7, 6, 2, 1, (0.2, 0.0), (0.1,), seed=4)
    L, Z = simulate(cfg, 200, exits=True)
    for t in range(200):
        run = last_passage_with_geodesic(gen_weights(cfg, t), 2, 1)
        assert L[t] == pytest.approx(run.L, rel=1e-13)
        assert Z[t] == run.exit


def test_geometric_exits_use_tie_rule():
    cfg = LatticeConfig(4, 4, 1, 1, (0.5,), (0.5,), "geometric", seed=1, q=0.3)
    L, Z = simulate(cfg, 50, exits=True)
    for t in range(50):
        run = last_passage_with_geodesic(gen_weights(cfg, t), 1, 1)
        assert (L[t], Z[t]) == (run.L, run.exit)


def test_row_scan_values():
    rng = np.random.default_rng(12)
    w = rng.exponential(size=(40, 9, 7))
    ref = np.array([last_passage(x) for x in w])
    assert np.allclose(batch_last_passage(w), ref, rtol=1e-13, atol=0)


def test_no_bulk_cell():
    with pytest.raises(DomainError):
        last_passage_with_geodesic(np.ones((1, 3)), 1, 1)


# --- statistical probes ------------------------------------------------------------

def test_dkw_radius_halving():
    assert dkw_radius(2000) == pytest.approx(dkw_radius(1000) / math.sqrt(2), rel=1e-14)
    assert dkw_radius(5000) == pytest.approx(math.sqrt(math.log(200) / 10000), rel=1e-14)


def test_ecdf_report_basics():
    cfg = LatticeConfig(1, 1, 1, 1, (0.0,), (0.0,), seed=6)
    rep = ecdf_rescaled(cfg, 30, 0.0, 2000)
    assert np.all(np.diff(rep.values) >= 0)
    assert rep.values[-1] == 1.0
    assert rep.at(rep.grid[-1] + 1) == 1.0
    with pytest.raises(DomainError):
        ecdf_rescaled(cfg, 30, 0.0, 999)


@pytest.mark.slow
def test_ecdf_against_baik_rains():
    cfg = LatticeConfig(1, 1, 1, 1, (0.0,), (0.0,), seed=2024)
    rep = ecdf_rescaled(cfg, 200, 0.0, 100000)
    points = np.quantile(rep.samples, np.linspace(0.02, 0.98, 17))
    dist = rep.sup_distance(lambda s: br_cdf_airy(0.0, s).value, points)
    assert dist <= rep.dkw_radius + 0.03


def stationary_cfg(N, seed):
    a = 0.5 * (16 * N) ** (-1 / 3)
    return LatticeConfig(N, N, 1, 1, (a,), (-a,), "stationary", seed=seed)


def test_stationary_increments():
    rep = stationarity_test(stationary_cfg(60, 7), count=5000)
    assert rep.p_value > 0.01
    assert abs(rep.lag1_correlation) <= rep.correlation_bound
    assert rep.rate == pytest.approx(0.5 - 0.5 * 960 ** (-1 / 3))
    assert stationarity_test(stationary_cfg(60, 7), count=5000) == rep


def test_stationarity_preconditions():
    with pytest.raises(DomainError):
        stationarity_test(LatticeConfig(10, 10, 1, 1, (0.0,), (0.0,)))
    with pytest.raises(DomainError):
        stationarity_test(stationary_cfg(10, 1), column=1)


def test_exit_tail_shape():
    cfg = LatticeConfig(1, 1, 1, 1, (0.0,), (0.0,), seed=5)
    rep = exit_tail(cfg, 100, np.linspace(0, 3, 13), count=10000)
    assert 0 < rep.tail[0] <= 1
    assert np.all(np.diff(rep.tail) <= 0)
    assert np.all(rep.lower <= rep.tail) and np.all(rep.tail <= rep.upper)
    assert rep.slope() < 0


def test_wilson_interval():
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    assert hi - lo == pytest.approx(2 * 1.96 * 0.05 / (1 + 1.96 ** 2 / 100), rel=0.02)
    assert wilson_interval(0, 10)[0] == 0.0


def test_thin_lpp_matches_dp():
    rng = np.random.default_rng(3)
    w = rng.exponential(size=(25, 3, 8))
    ref = np.array([last_passage(x.T) for x in w])
    assert np.allclose(thin_lpp(w), ref, rtol=1e-13, atol=0)


def test_boundary_single_row_is_gaussian():
    rep = boundary_process_probe(1, 10000, 1.0, count=5000, seed=1)
    assert rep.ks_pvalue > 0.01
    assert abs(rep.mean) <= 3 / math.sqrt(5000)
    assert rep.variance == pytest.approx(1.0, abs=0.06)


def test_boundary_two_rows_variance_stable():
    small = boundary_process_probe(2, 1000, 1.0, count=5000, seed=2)
    large = boundary_process_probe(2, 2000, 1.0, count=5000, seed=3)
    assert np.isfinite(small.variance) and small.variance > 0
    assert abs(large.variance / small.variance - 1) <= 0.10
    assert small.ks_pvalue is None
