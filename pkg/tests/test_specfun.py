import math

import numpy as np
import pytest
from scipy import integrate, special

from gbrkit.errors import DomainError
from gbrkit.specfun import (
    AI0,
    AIP0,
    airy,
    airy_ai,
    airy_ai_prime,
    airy_kernel,
    airy_kernel_partials,
    weighted_airy_moment,
    weighted_airy_moments,
)


def ai_by_saddle_line(x):
    """Ai(x), x > 0, from the contour integral on the vertical line through the saddle sqrt(x).

    On z = c + i t the exponent is -2c^3/3 - c t^2 - i t^3/3, so the
    integral is a Gaussian-damped cosine with the decay factored out.
    """
    c = math.sqrt(x)
    T = math.sqrt(80.0 / c)
    val, _ = integrate.quad(lambda t: math.exp(-c * t * t) * math.cos(t ** 3 / 3.0), -T, T,
                            epsabs=0, epsrel=1e-13, limit=400)
    return math.exp(-2.0 * c ** 3 / 3.0) * val / (2.0 * math.pi)


def test_values_at_origin():
    assert airy_ai(0.0) == pytest.approx(0.3550280538878172, abs=1e-15)
    assert airy_ai_prime(0.0) == pytest.approx(-0.2588194037928068, abs=1e-15)
    assert AI0 == pytest.approx(3 ** (-2 / 3) / math.gamma(2 / 3), rel=1e-15)
    assert AIP0 == pytest.approx(-(3 ** (-1 / 3)) / math.gamma(1 / 3), rel=1e-15)


@pytest.mark.parametrize("x", [30.0, 12.5, 3.0])
def test_positive_values_match_contour_integral(x):
    assert airy_ai(x) == pytest.approx(ai_by_saddle_line(x), rel=1e-12)


def test_absolute_accuracy_on_window():
    x = np.linspace(-15, 30, 4001)
    ref = special.airy(x)
    assert np.max(np.abs(airy_ai(x) - ref[0])) < 1e-12
    assert np.max(np.abs(airy_ai_prime(x) - ref[1])) < 1e-12


def test_domain_window():
    with pytest.raises(DomainError):
        airy_ai(-41.0)
    with pytest.raises(DomainError):
        airy_ai(201.0)


def test_underflow_flag_far_right():
    v = airy(150.0)
    assert v.underflow and v.ai == 0.0
    assert not airy(5.0).underflow


def test_positive_and_decreasing_on_right():
    x = np.linspace(0, 40, 2001)
    a = airy_ai(x)
    assert np.all(a > 0)
    assert np.all(np.diff(a) < 0)


def second_difference_residual(f, x, h=1e-3):
    return np.abs((f(x + h) - 2 * f(x) + f(x - h)) / h ** 2 - x * f(x))


FD_LIMITED = ("the step-1e-3 second difference has truncation error h^2/12 (x^2 Ai + 2 Ai'), "
              "about 2e-6 near x = -9.4 even for the exact function")


@pytest.mark.xfail(strict=True, reason=FD_LIMITED)
def test_ode_residual_random_points():
    x = np.random.default_rng(11).uniform(-10, 10, 200)
    assert np.max(second_difference_residual(airy_ai, x)) <= 1e-6


@pytest.mark.xfail(strict=True, reason=FD_LIMITED)
def test_ode_residual_tight_near_origin():
    x = np.linspace(-2, 2, 21)
    assert np.max(second_difference_residual(airy_ai, x)) <= 1e-9


def test_ode_residual_is_the_difference_formula():
    # our residual tracks the reference function's residual, and both shrink like h^2
    x = np.random.default_rng(11).uniform(-10, 10, 200)
    ours = second_difference_residual(airy_ai, x)
    ref = second_difference_residual(lambda t: special.airy(t)[0], x)
    assert np.max(ref) > 1e-6
    assert np.max(np.abs(ours - ref)) < 1e-8
    predicted = 1e-6 / 12 * np.abs(x * x * airy_ai(x) + 2 * airy_ai_prime(x))
    assert np.max(np.abs(ours - predicted)) < 1e-8
    assert np.max(second_difference_residual(airy_ai, x, h=2e-4)) <= 1e-6


def test_kernel_symmetry_and_diagonal():
    rng = np.random.default_rng(3)
    xi, ze = rng.uniform(-10, 10, (2, 300))
    assert np.max(np.abs(airy_kernel(xi, ze) - airy_kernel(ze, xi))) < 1e-14
    diag = airy_ai_prime(xi) ** 2 - xi * airy_ai(xi) ** 2
    assert np.max(np.abs(airy_kernel(xi, xi) - diag)) < 1e-12


def test_kernel_matches_defining_integral():
    lam, w = np.polynomial.legendre.leggauss(200)
    nodes = np.concatenate([20 * (lam + 1) / 2 + 20 * k for k in range(2)])
    weights = np.concatenate([10 * w, 10 * w])
    ref = np.sum(weights * special.airy(nodes)[0] * special.airy(1 + nodes)[0])
    assert airy_kernel(0.0, 1.0) == pytest.approx(ref, abs=1e-10)


def test_christoffel_darboux_random():
    rng = np.random.default_rng(5)
    xi, ze = rng.uniform(-10, 10, (2, 100))
    keep = np.abs(xi - ze) > 1e-2
    xi, ze = xi[keep], ze[keep]
    a1, b1 = special.airy(xi)[:2]
    a2, b2 = special.airy(ze)[:2]
    cd = (a1 * b2 - b1 * a2) / (xi - ze)
    assert np.max(np.abs(cd - airy_kernel(xi, ze))) <= 1e-9


def test_kernel_on_grid_against_quadrature():
    for xi, ze in [(-10.0, -9.5), (-3.0, 4.0), (2.0, 2.0), (10.0, -10.0), (0.3, 0.3001)]:
        ref, _ = integrate.quad(lambda t: special.airy(xi + t)[0] * special.airy(ze + t)[0],
                                0, 60, limit=800, epsabs=1e-14)
        assert airy_kernel(xi, ze) == pytest.approx(ref, abs=1e-10)


def test_partials_relabeling():
    rng = np.random.default_rng(8)
    xi, ze = rng.uniform(-6, 6, (2, 50))
    d1, d2, d12 = airy_kernel_partials(xi, ze)
    e1, e2, e12 = airy_kernel_partials(ze, xi)
    assert np.max(np.abs(d1 - e2)) < 1e-13
    assert np.max(np.abs(d12 - e12)) < 1e-13


@pytest.mark.parametrize("xi,ze", [(5.0, 5.0), (0.0, 0.0), (-2.0, 1.5), (1.0, 1.2), (2.0, -0.5)])
def test_partials_against_finite_differences(xi, ze):
    h = 1e-4
    d1, d2, d12 = airy_kernel_partials(xi, ze)
    f1 = (airy_kernel(xi + h, ze) - airy_kernel(xi - h, ze)) / (2 * h)
    f2 = (airy_kernel(xi, ze + h) - airy_kernel(xi, ze - h)) / (2 * h)
    f12 = (airy_kernel(xi + h, ze + h) - airy_kernel(xi + h, ze - h)
           - airy_kernel(xi - h, ze + h) + airy_kernel(xi - h, ze - h)) / (4 * h * h)
    assert d1 == pytest.approx(f1, abs=1e-9)
    assert d2 == pytest.approx(f2, abs=1e-9)
    assert d12 == pytest.approx(f12, abs=1e-7)


def test_partials_against_integrals():
    xi, ze = -7.0, -7.3
    d1, _, d12 = airy_kernel_partials(xi, ze)
    q1 = integrate.quad(lambda t: special.airy(xi + t)[1] * special.airy(ze + t)[0], 0, 60, limit=800,
                        epsabs=1e-14)[0]
    q12 = integrate.quad(lambda t: special.airy(xi + t)[1] * special.airy(ze + t)[1], 0, 60, limit=800,
                         epsabs=1e-14)[0]
    assert d1 == pytest.approx(q1, abs=1e-10)
    assert d12 == pytest.approx(q12, abs=1e-10)


def test_moment_against_truncated_quadrature():
    ref = integrate.quad(lambda t: special.airy(t)[0] * math.exp(-t), 0, 60, epsabs=1e-14, limit=400)[0]
    assert weighted_airy_moment(0.0, -1.0, 0) == pytest.approx(ref, abs=1e-10)


def test_moment_truncation_radii_agree():
    # growing weight e^{t/2}: compare cutoffs 40 and 60 on a fine panel rule
    def cut(L):
        t, w = np.polynomial.legendre.leggauss(60)
        edges = np.linspace(0, L, int(L) + 1)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            x = a + (b - a) * (t + 1) / 2
            total += np.sum((b - a) / 2 * w * x * special.airy(x)[0] * np.exp(0.5 * x))
        return total
    assert cut(40.0) == pytest.approx(cut(60.0), abs=1e-10)
    assert weighted_airy_moment(0.0, 0.5, 1) == pytest.approx(cut(60.0), abs=1e-10)


def test_moment_tends_to_total_integral():
    # the tail of int Ai oscillates around 1 with an envelope ~ |xi|^(-3/4)
    for xi in (-10.0, -20.0, -35.0):
        m = weighted_airy_moment(xi, 0.0, 0)
        assert abs(m - 1.0) <= abs(xi) ** -0.75
    assert weighted_airy_moment(0.0, 0.0, 0) == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_moment_bounded_for_decaying_weight():
    full = weighted_airy_moment(1.0, 0.0, 0)
    for c in (0.0, -0.3, -2.0):
        m = weighted_airy_moment(1.0, c, 0)
        assert 0.0 < m <= full + 1e-15


def test_moment_order_check():
    with pytest.raises(DomainError):
        weighted_airy_moment(0.0, 0.0, 2)


def test_vectorized_moments_match_scalar():
    xs = np.array([-6.0, -1.3, 0.0, 0.7, 4.0])
    for c in (-1.0, 0.0, 1.5):
        m0, m1 = weighted_airy_moments(xs, c, 1)
        for k, xi in enumerate(xs):
            assert m0[k] == pytest.approx(weighted_airy_moment(xi, c, 0), abs=1e-10, rel=1e-12)
            assert m1[k] == pytest.approx(weighted_airy_moment(xi, c, 1), abs=1e-10, rel=1e-12)


def test_moment_continuity():
    # integrating by parts, f_p' = -[p == 0] Ai(xi) - p f_0 - c f_p, which gives the constant C
    h = 1e-4
    for c in (-1.0, 0.0, 1.0):
        for p in (0, 1):
            for xi in (-3.0, 0.0, 2.5):
                f = weighted_airy_moment(xi, c, p)
                f0 = weighted_airy_moment(xi, c, 0)
                slope = -(airy_ai(xi) if p == 0 else 0.0) - p * f0 - c * f
                C = abs(airy_ai(xi)) + p * abs(f0) + abs(c * f)
                d = weighted_airy_moment(xi + h, c, p) - f
                assert abs(d) <= 1.01 * C * h + 1e-10
                assert d / h == pytest.approx(slope, abs=1e-3 * (1 + abs(slope)))
