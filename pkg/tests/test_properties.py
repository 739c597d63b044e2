"""Randomized invariants, one block per module."""
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gbrkit import cli
from gbrkit.contours import gbr_entry, zero_residue_integral
from gbrkit.distributions import GbrParams, br_cdf_airy
from gbrkit.fredholm import MatrixKernel2x2, det_on_rule, lu_determinant
from gbrkit.lpp_sim import dkw_radius, last_passage, wilson_interval
from gbrkit.quadrature import circle_rule, halfline_rule, interval_rule
from gbrkit.specfun import airy_ai, airy_ai_prime, airy_kernel

FAST = settings(max_examples=60, deadline=None)
SLOW = settings(max_examples=6, deadline=None, suppress_health_check=[HealthCheck.too_slow])

finite = st.floats(-5, 5, allow_nan=False)


# quadrature

@FAST
@given(st.integers(1, 40), st.data())
def test_gauss_legendre_exact_to_degree(n, data):
    a = data.draw(st.floats(-3, 3))
    b = a + data.draw(st.floats(0.1, 4))
    coef = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=2 * n, max_size=2 * n)))
    poly = np.polynomial.Polynomial(coef, domain=[a, b], window=[-1, 1])
    anti = poly.integ()
    exact = anti(b) - anti(a)
    rule = interval_rule(a, b, n)
    got = float(np.dot(rule.weights, poly(rule.nodes)))
    scale = float(np.dot(rule.weights, np.abs(poly(rule.nodes)))) + (b - a) * np.abs(coef).sum()
    assert abs(got - exact) <= 1e-12 * scale


@FAST
@given(st.complex_numbers(max_magnitude=3), st.floats(0.2, 2), st.integers(-4, 4))
def test_circle_picks_only_the_simple_pole(center, radius, k):
    rule = circle_rule(center, radius, 64)
    val = np.sum(rule.weights * (rule.nodes - center) ** k)
    want = 2j * math.pi if k == -1 else 0.0
    assert abs(val - want) <= 1e-12 * max(1.0, radius ** k)


@FAST
@given(st.floats(-10, 10), st.integers(4, 64))
def test_halfline_nodes_increase_and_shift(s, n):
    r = halfline_rule(s, n)
    assert np.all(np.diff(r.nodes) > 0) and r.nodes[0] > s
    assert np.allclose(r.nodes - s, halfline_rule(0.0, n).nodes, rtol=1e-13, atol=1e-12)


# special functions

@FAST
@given(st.floats(-10, 10), st.floats(-10, 10))
def test_airy_kernel_christoffel_darboux(xi, ze):
    if abs(xi - ze) <= 1e-2:
        ze = xi + 0.5
    cd = (airy_ai(xi) * airy_ai_prime(ze) - airy_ai_prime(xi) * airy_ai(ze)) / (xi - ze)
    assert abs(cd - airy_kernel(xi, ze)) <= 1e-9
    assert airy_kernel(xi, ze) == airy_kernel(ze, xi)


@FAST
@given(st.floats(-12, 12))
def test_airy_kernel_diagonal_nonnegative(x):
    k = airy_kernel(x, x)
    assert k >= 0
    assert k == pytest.approx(airy_ai_prime(x) ** 2 - x * airy_ai(x) ** 2, abs=1e-12)


@FAST
@given(arrays(float, 6, elements=st.floats(-8, 8)))
def test_airy_kernel_gram_is_semidefinite(x):
    g = airy_kernel(x[:, None], x[None, :])
    assert np.min(np.linalg.eigvalsh(0.5 * (g + g.T))) >= -1e-10


# contours

@FAST
@given(finite, finite)
def test_zero_residue_vanishes(x, y):
    assert abs(zero_residue_integral(x, y)) <= 1e-12


@SLOW
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5),
       st.floats(0.4, 0.8), st.sampled_from([(1, 1), (1, 2), (2, 1), (2, 2)]))
def test_gbr_entry_independent_of_vertex_offset(x, y, xi, ze, delta, block):
    p = GbrParams(1, 1, (x,), (y,))
    assert abs(gbr_entry(p, *block, xi, ze, delta=delta) - gbr_entry(p, *block, xi, ze)) <= 1e-8


# fredholm

@FAST
@given(st.integers(1, 10), st.integers(0, 2 ** 32 - 1))
def test_lu_determinant_matches_eigen_product(n, seed):
    a = np.random.default_rng(seed).normal(size=(n, n))
    value, growth = lu_determinant(a)
    ref = np.prod(np.linalg.eigvals(a)).real
    assert value == pytest.approx(ref, rel=1e-9, abs=1e-12)
    assert 0 < growth < np.inf


@FAST
@given(st.floats(0.1, 0.9), st.floats(-0.5, 0.5), st.floats(0.1, 0.9), st.floats(-2, 2))
def test_conjugation_leaves_determinant(a, b, c, rate):
    def entry(i, j, x, y):
        base = np.exp(-(x + y))
        return {(1, 1): a * base, (1, 2): b * base * np.exp(0.3 * x),
                (2, 1): b * base, (2, 2): c * np.exp(-(x * x + y * y))}[(i, j)]
    kern = MatrixKernel2x2(entry)
    rule = interval_rule(0.0, 12.0, 24)
    ref, _ = det_on_rule(kern, rule)
    val, _ = det_on_rule(kern, rule, (lambda t: np.exp(-rate * t), lambda t: np.exp(rate * t)))
    assert abs(val - ref) <= 1e-9 * abs(ref)


# distributions

@SLOW
@given(st.floats(-1, 1), st.floats(-3, 3))
def test_baik_rains_even_in_tau(tau, s):
    assert abs(br_cdf_airy(tau, s).value - br_cdf_airy(-tau, s).value) <= 1e-7


@SLOW
@given(st.floats(-0.8, 0.8), st.floats(-3, 2), st.floats(0.05, 1.0))
def test_baik_rains_nondecreasing_in_s(tau, s, step):
    lo = br_cdf_airy(tau, s).value
    hi = br_cdf_airy(tau, s + step).value
    assert -1e-6 <= lo <= hi + 1e-7 and hi <= 1 + 1e-6


# last passage

weights = st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 32 - 1))


def draw(shape_seed):
    C, R, seed = shape_seed
    return np.random.default_rng(seed).exponential(size=(C, R))


@FAST
@given(weights)
def test_passage_transpose_symmetric(ss):
    w = draw(ss)
    assert last_passage(w) == pytest.approx(last_passage(w.T), rel=1e-14)


@FAST
@given(weights, st.floats(0.1, 10), st.floats(-1, 1))
def test_passage_affine_in_weights(ss, scale, shift):
    w = draw(ss)
    steps = sum(w.shape) - 1
    assert last_passage(scale * w + shift) == pytest.approx(scale * last_passage(w) + shift * steps, rel=1e-12,
                                                            abs=1e-12)


@FAST
@given(weights)
def test_passage_bounded_by_sum_and_diagonal(ss):
    w = draw(ss)
    L = last_passage(w)
    assert L <= w.sum() + 1e-12
    assert L >= w[0, :].sum() + w[1:, -1].sum() - 1e-12


# statistics helpers

@FAST
@given(st.integers(1, 10 ** 6), st.data())
def test_wilson_contains_point_estimate(total, data):
    hits = data.draw(st.integers(0, total))
    lo, hi = wilson_interval(hits, total)
    assert 0 <= lo <= hits / total <= hi <= 1


@FAST
@given(st.integers(1, 10 ** 7))
def test_dkw_shrinks(n):
    assert dkw_radius(4 * n) == pytest.approx(dkw_radius(n) / 2, rel=1e-13)


# output tables

@FAST
@given(st.lists(st.tuples(st.floats(allow_nan=False, allow_infinity=False), st.floats(-1e300, 1e300)),
                min_size=1, max_size=20), st.sampled_from(["csv", "json"]))
def test_tables_round_trip(tmp_path_factory, rows, form):
    path = tmp_path_factory.mktemp("t") / f"t.{form}"
    cli.write_table(["s", "value"], rows, str(path), form)
    cols, back = cli.read_table(str(path))
    assert cols == ["s", "value"]
    assert back == [list(r) for r in rows]


@FAST
@given(st.integers(-20, 20), st.integers(0, 80), st.sampled_from([0.25, 0.5, 1.0]))
def test_grid_count(lo, count, step):
    hi = lo + count * step
    g = cli.parse_grid(f"{lo}:{hi}:{step}")
    assert g.size == count + 1 and g[0] == lo and g[-1] == pytest.approx(hi)
