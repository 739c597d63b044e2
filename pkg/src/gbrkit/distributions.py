"""User-facing distribution functions and the N <-> s scaling maps.

Baik-Rains values come from three independent routes: the 2x2 Airy-type
kernel (``br_cdf_airy``), the resolvent formula with a derivative in s
(``br_cdf_classical``, tau != 0) and the tau = 0 resolvent identity
(``br_cdf_tau0``). The generalized law and all finite-N laws go through
contour-integral kernels from :mod:`gbrkit.contours`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NonConvergenceError
from .fredholm import (
    AiryResolvent,
    DetResult,
    MatrixKernel2x2,
    default_span,
    fredholm_det_2x2,
    fredholm_det_discrete,
    fredholm_det_scalar,
)
from .quadrature import composite_rule, refine_until
from .specfun import airy_ai, airy_kernel, airy_kernel_partials, weighted_airy_moments

MU_PANEL = 1.0


@dataclass(frozen=True)
class GbrParams:
    """Parameters of the generalized Baik-Rains law: ell column and kay row offsets."""

    ell: int
    kay: int
    x: tuple
    y: tuple
    tau: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))
        object.__setattr__(self, "y", tuple(float(v) for v in np.atleast_1d(self.y)))
        if self.ell < 1 or self.kay < 1:
            raise DomainError("ell and kay must be at least 1")
        if len(self.x) != self.ell or len(self.y) != self.kay:
            raise DomainError(f"x needs {self.ell} entries and y needs {self.kay}")
        if not all(math.isfinite(v) for v in self.x + self.y + (self.tau,)):
            raise DomainError("GBR parameters must be finite")

    def shifted(self):
        """Offsets with tau folded in: (x - tau, y + tau)."""
        return (tuple(v - self.tau for v in self.x), tuple(v + self.tau for v in self.y))


@dataclass(frozen=True)
class FiniteNParams:
    """Lattice size, boundary parameters and weight model for the finite-N laws.

    ``model`` is "thick", "stationary" or "geometric"; the geometric model
    also needs ``q`` and takes ``alpha``/``beta`` as its a/b vectors.
    """

    m: int
    n: int
    alpha: tuple
    beta: tuple
    model: str = "thick"
    q: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(v) for v in np.atleast_1d(self.alpha)))
        object.__setattr__(self, "beta", tuple(float(v) for v in np.atleast_1d(self.beta)))
        if self.m < 1 or self.n < 1:
            raise DomainError("m and n must be at least 1")
        if not self.alpha or not self.beta:
            raise DomainError("alpha and beta need at least one entry each")
        if self.model == "thick":
            if min(self.alpha) <= -0.5 or min(self.beta) <= -0.5:
                raise DomainError("thick model needs every alpha, beta > -1/2")
        elif self.model == "stationary":
            if min(self.alpha) + min(self.beta) < 0:
                raise DomainError("stationary model needs alpha_i + beta_j >= 0")
            if min(self.alpha) <= -0.5 or min(self.beta) <= -0.5:
                raise DomainError("stationary model needs every alpha, beta > -1/2")
        elif self.model == "geometric":
            q = self.q
            if q is None or not 0.0 < q < 1.0:
                raise DomainError("geometric model needs 0 < q < 1")
            root = math.sqrt(q)
            for v in self.alpha + self.beta:
                if not 0.0 < root * v < 1.0:
                    raise DomainError("geometric model needs 0 < sqrt(q) a_i, sqrt(q) b_j < 1")
        else:
            raise DomainError(f"unknown model {self.model!r}")

    @property
    def ell(self):
        return len(self.alpha)

    @property
    def kay(self):
        return len(self.beta)


@dataclass(frozen=True)
class ScalingMap:
    """Critical-direction lattice size (m, n) for a given N and tau."""

    N: int
    tau: float = 0.0

    def __post_init__(self):
        if self.N < 1:
            raise DomainError("N must be at least 1")
        if self.m < 1 or self.n < 1:
            raise DomainError(f"tau={self.tau} is too large for N={self.N}")

    @property
    def shift(self):
        return int(math.floor(self.tau * (2.0 * self.N) ** (2.0 / 3.0)))

    @property
    def m(self):
        return self.N - self.shift

    @property
    def n(self):
        return self.N + self.shift

    @property
    def width(self):
        return (16.0 * self.N) ** (1.0 / 3.0)


def scale_to_limit(scaling: ScalingMap, raw_L):
    return (np.asarray(raw_L, dtype=float) - 4.0 * scaling.N) / scaling.width if np.ndim(raw_L) else \
        (float(raw_L) - 4.0 * scaling.N) / scaling.width


def scale_from_limit(scaling: ScalingMap, s):
    return 4.0 * scaling.N + scaling.width * (np.asarray(s, dtype=float) if np.ndim(s) else float(s))


# ---------------------------------------------------------------------------
# GUE


def gue_cdf(s: float, tol: float = 1e-10) -> DetResult:
    """Tracy-Widom GUE distribution: det(I - K_Ai) on (s, inf)."""
    return fredholm_det_scalar(airy_kernel, s, tol)


# ---------------------------------------------------------------------------
# Baik-Rains via the 2x2 Airy kernel


class BaikRainsKernel(MatrixKernel2x2):
    """The 2x2 Airy-type Baik-Rains kernel for one value of tau.

    The double integral in the (1,2) entry is written as a single integral
    over mu of M0(xi + mu, -tau) M0(zeta + mu, tau), so every block is a
    sum of outer products plus Airy-kernel terms and the min(xi, zeta) kink.
    """

    def __init__(self, tau: float, conj_rate: float | None = None, origin: float = 0.0):
        self.tau = float(tau)
        rate = conj_rate if conj_rate is not None else abs(self.tau) + 1.0
        self.conj_rate = rate
        self.origin = origin
        conj = (lambda x: np.exp(-rate * (x - origin)), lambda x: np.exp(rate * (x - origin)))
        super().__init__(None, conjugation=conj)

    volterra_blocks = ((1, 2),)

    def volterra(self, i, j, x, t):
        # K12 on t < x minus its continuation from t >= x
        return np.exp(self.tau * (x - t)) * (t - x)

    def _moments(self, points):
        tau = self.tau
        m0_minus, m1_minus = weighted_airy_moments(points, -tau, 1)
        m0_plus, m1_plus = weighted_airy_moments(points, tau, 1)
        return m0_minus, m1_minus, m0_plus, m1_plus

    def _mu_rule(self, lowest):
        length = max(0.0, -lowest) + 16.0
        return composite_rule(0.0, length, int(math.ceil(length / MU_PANEL)), 16)

    def _mu_factors(self, x, rule):
        shifted = x[:, None] + rule.nodes[None, :]
        left = weighted_airy_moments(shifted, -self.tau)
        right = weighted_airy_moments(shifted, self.tau)
        return left, right

    def blocks(self, x):
        x = np.asarray(x, dtype=float)
        tau = self.tau
        X, Y = np.meshgrid(x, x, indexing="ij")
        ai = airy_ai(x)
        m0_minus, m1_minus, m0_plus, m1_plus = self._moments(x)
        k_ai = airy_kernel(X, Y)
        d1, d2, d12 = airy_kernel_partials(X, Y)
        grow = np.exp(-tau ** 3 / 3.0 + tau * x)    # e^{-tau^3/3 + tau xi}
        shrink = np.exp(tau ** 3 / 3.0 - tau * x)   # e^{tau^3/3 - tau zeta}
        rule = self._mu_rule(float(x.min()))
        left, right = self._mu_factors(x, rule)
        double = (left * rule.weights[None, :]) @ right.T
        k11 = k_ai - np.outer(m0_minus, ai) + np.outer(grow, ai)
        k22 = k_ai - np.outer(ai, m0_plus) + np.outer(ai, shrink)
        k21 = tau * tau * k_ai - tau * (d1 - d2) - d12
        k12 = (-double + np.outer(m1_minus, shrink) + np.outer(grow, m1_plus)
               - np.exp(tau * (X - Y)) * (tau * tau - X))
        return {(1, 1): k11, (1, 2): k12, (2, 1): k21, (2, 2): k22}

    def entry(self, i, j, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        pts = np.concatenate([x.ravel(), y.ravel()])
        uniq, inv = np.unique(pts, return_inverse=True)
        mat = self.blocks(uniq)[(i, j)]
        a = inv[: x.size]
        b = inv[x.size:]
        out = mat[a, b].reshape(x.shape)
        if (i, j) in self.volterra_blocks:
            out = out + np.where(y < x, self.volterra(i, j, x, y), 0.0)
        return out


def br_cdf_airy(tau: float, s: float, tol: float = 1e-9, conj_rate: float | None = None) -> DetResult:
    """Baik-Rains CDF from the 2x2 Airy-type kernel on (s + tau^2, inf)."""
    sigma = s + tau * tau
    kernel = BaikRainsKernel(tau, conj_rate, origin=sigma)
    return fredholm_det_2x2(kernel, sigma, tol=tol, n0=32)


# ---------------------------------------------------------------------------
# Resolvent-based routes


def cross_moment(points, base: float, c: float):
    """int_0^inf Ai(p + l) M0(base + l, c) dl for every p in ``points``."""
    points = np.asarray(points, dtype=float)
    lowest = min(float(points.min()), base)
    length = max(0.0, -lowest) + 16.0
    rule = composite_rule(0.0, length, int(math.ceil(length / MU_PANEL)), 16)
    inner = weighted_airy_moments(base + rule.nodes, c)
    ai = airy_ai(points[..., None] + rule.nodes)
    return ai @ (rule.weights * inner)


def _classical_product(sigma: float, tau: float, n: int) -> float:
    """F_GUE(sigma) g(sigma, tau), with g built from the Airy resolvent on (sigma, inf)."""
    res = AiryResolvent(sigma, n)
    p = res.nodes
    cube = tau ** 3 / 3.0
    _, m1_s = weighted_airy_moments(np.array([sigma]), tau, 1)
    # corner double integral over the negative quadrant, carrying the same
    # e^{tau sigma} factor as phi_hat; reduced with the Laplace transforms of Ai
    corner = (sigma - tau * tau) * math.exp(cube) + math.exp(tau * sigma) * float(m1_s[0])
    phi_hat = math.exp(cube) * weighted_airy_moments(p, -tau) - math.exp(tau * sigma) * cross_moment(p, sigma, tau)
    psi_hat = np.exp(cube - tau * p) - weighted_airy_moments(p, tau)
    scaling = math.exp(-cube) * (corner + res.inner(phi_hat, psi_hat))
    return res.determinant() * scaling


def br_cdf_classical(tau: float, s: float, tol: float = 1e-8, step: float = 1e-3,
                     n0: int = 48, n_max: int = 192) -> DetResult:
    """Baik-Rains CDF as d/dsigma [F_GUE(sigma) g(sigma, tau)] at sigma = s + tau^2.

    The derivative is a central difference with one Richardson step; the
    rule size is doubled until the derivative is stable.
    """
    if not tau > 0:
        raise DomainError("the classical representation needs tau > 0")
    sigma = s + tau * tau

    def evaluate(n):
        def central(h):
            return (_classical_product(sigma + h, tau, n) - _classical_product(sigma - h, tau, n)) / (2.0 * h)
        return (4.0 * central(0.5 * step) - central(step)) / 3.0

    value, err = refine_until(evaluate, tol, n0, n_max=n_max)
    return DetResult(value, err, 2 * n0)


@dataclass
class Tau0Parts:
    """Pieces of the tau = 0 resolvent formula at one point t."""

    t: float
    gue: float
    log_derivative: float   # F_GUE'/F_GUE = K_Ai(t,t) + <g|g>
    x: float                # exp(-int_t^inf q)
    upsilon: float
    g_h_direct: float
    h_diag: float

    @property
    def value(self):
        return self.gue * (self.log_derivative * self.upsilon + self.x ** 2)

    @property
    def g_h_closed(self):
        return -(-self.x - 1.0 / self.x + 2.0 + 2.0 * self.h_diag) / 2.0


def hastings_mcleod(t: float, n: int = 64) -> float:
    """q(t) = Ai(t) + <f|g>_t with f = Ai and g = K_Ai(., t)."""
    res = AiryResolvent(t, n)
    return airy_ai(t) + res.inner(airy_ai(res.nodes), airy_kernel(res.nodes, t))


def _q_integral(t: float, n: int, points: int) -> float:
    upper = max(t, 0.0) + 16.0
    rule = composite_rule(t, upper, max(1, int(math.ceil((upper - t) / 4.0))), points)
    return float(sum(w * hastings_mcleod(u, n) for u, w in zip(rule.nodes, rule.weights)))


def tau0_parts(t: float, n: int = 64, q_points: int = 16) -> Tau0Parts:
    res = AiryResolvent(t, n)
    p = res.nodes
    g = airy_kernel(p, t)
    big_f = -weighted_airy_moments(p, 0.0)
    big_h = cross_moment(p, t, 0.0)
    psi_t = float(weighted_airy_moments(np.array([t]), 0.0, 1)[1][0])
    upsilon = t + psi_t - res.inner(1.0 + big_f, big_f + big_h)
    x = math.exp(-_q_integral(t, n, q_points))
    h_diag = float(cross_moment(np.array([t]), t, 0.0)[0])
    return Tau0Parts(
        t=t,
        gue=res.determinant(),
        log_derivative=airy_kernel(t, t) + res.inner(g, g),
        x=x,
        upsilon=upsilon,
        g_h_direct=res.inner(g, big_h),
        h_diag=h_diag,
    )


def br_cdf_tau0(s: float, tol: float = 1e-8, n0: int = 48, n_max: int = 192) -> DetResult:
    """Baik-Rains CDF at tau = 0 from F_GUE, the Hastings-McLeod integral and Upsilon."""
    value, err = refine_until(lambda n: tau0_parts(s, n).value, tol, n0, n_max=n_max)
    return DetResult(value, err, 2 * n0)


def gbr_kernel(params: GbrParams, s: float, panels_scale: int = 1):
    from .contours import GbrEvaluator, GbrKernel

    x, y = params.shifted()
    return GbrKernel(GbrEvaluator(x, y, panels_scale=panels_scale), origin=s)


def gbr_cdf(params: GbrParams, s: float, tol: float = 1e-8, n0: int = 32) -> DetResult:
    """F_{ell,kay,x,y}(s) of the generalized Baik-Rains law (tau folded into x and y)."""
    return fredholm_det_2x2(gbr_kernel(params, s), s, tol=tol, n0=n0)


def gbr2_cdf(params: GbrParams, s: float, tol: float = 1e-8, n0: int = 32) -> DetResult:
    """Limit law of the stationary thick-boundary model (hatted kernel)."""
    from .contours import GbrEvaluator, GbrKernel, check_hat_pattern

    check_hat_pattern(params)
    x, y = params.shifted()
    kernel = GbrKernel(GbrEvaluator(x, y, hatted=True), origin=s)
    return fredholm_det_2x2(kernel, s, tol=tol, n0=n0)


def gbr_limit_cdf(alpha_tilde, beta_tilde, x, y, tau: float, s: float, tol: float = 1e-8) -> DetResult:
    """Limit CDF for boundary parameters alpha = alpha_tilde + x(16N)^(-1/3) (same for beta).

    Only coordinates with alpha_tilde exactly zero survive in the limit; their
    offsets are forwarded as x - tau, y + tau at argument s + tau^2.
    """
    at = np.atleast_1d(np.asarray(alpha_tilde, dtype=float))
    bt = np.atleast_1d(np.asarray(beta_tilde, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if at.shape != x.shape or bt.shape != y.shape:
        raise DomainError("alpha_tilde/x and beta_tilde/y must have matching lengths")
    if np.any(at < 0) or np.any(bt < 0):
        raise DomainError("alpha_tilde and beta_tilde must be nonnegative")
    xi, yi = x[at == 0.0], y[bt == 0.0]
    if not len(xi) or not len(yi):
        raise DomainError("the limit law needs at least one zero component on each side")
    params = GbrParams(len(xi), len(yi), tuple(xi - tau), tuple(yi + tau))
    return gbr_cdf(params, s + tau * tau, tol=tol)


def br_cdf_via_gbr(tau: float, s: float, tol: float = 1e-8) -> DetResult:
    """F_BR,tau(s) as the one-by-one generalized law with offsets (-tau, tau) at s + tau^2."""
    return gbr_limit_cdf([0.0], [0.0], [0.0], [0.0], tau, s, tol=tol)


# ---------------------------------------------------------------------------
# finite N

TAIL_DENSITY = 1e-14
GEO_TAIL = 1e-12


def _finite_kernel(p: FiniteNParams, s: float, span: float):
    from .contours import FiniteNEvaluator, FiniteNKernel

    ev = FiniteNEvaluator(p.m, p.n, p.alpha, p.beta, hatted=p.model == "stationary", args=(s, s + span))
    return ev, FiniteNKernel(ev, s, span)


def _finite_span(p: FiniteNParams, s: float, max_doublings: int = 6):
    """Integration length beyond s where the kernel diagonal has decayed below TAIL_DENSITY."""
    from .contours import saddle_scaling

    x0, _, c = saddle_scaling(p.m, p.n)
    span = c * (max(0.0, (x0 - s) / c) + 12.0)
    for _ in range(max_doublings):
        ev, kernel = _finite_kernel(p, s, span)
        end = s + span
        tail = abs(ev.entry(1, 1, end, end)) + abs(ev.entry(2, 2, end, end))
        if tail < TAIL_DENSITY:
            return span, kernel
        span *= 2.0
    raise NonConvergenceError(f"kernel diagonal still {tail:.2e} at s + {span / 2:.1f}")


def finite_n_cdf(p: FiniteNParams, s: float, tol: float = 1e-8, n0: int = 32) -> DetResult:
    """P(L <= s) for the finite lattice with boundary rows and columns.

    Thick and stationary models use the continuous determinant on (s, inf);
    the geometric model sums over the integers above floor(s).
    """
    if p.model == "geometric":
        return geometric_cdf(p, s)
    if s < 0:
        return DetResult(0.0, 0.0)
    span, kernel = _finite_span(p, float(s))
    return fredholm_det_2x2(kernel, float(s), tol=tol, n0=n0, span=span)


class GeometricKernel(MatrixKernel2x2):
    """Geometric-model kernel on integer points: contour parts plus the R12 residue row."""

    def __init__(self, evaluator):
        self.evaluator = evaluator
        self.conjugation = None
        self.kinked = False

    def blocks(self, x):
        ev = self.evaluator
        out = {(i, j): ev.block(i, j, x, x) for i in (1, 2) for j in (1, 2)}
        d = x[:, None] - x[None, :] - 1.0
        out[(1, 2)] = out[(1, 2)] + ev.residue_row(d.ravel()).reshape(d.shape)
        return out

    def entry(self, i, j, x, y):
        x, y = np.broadcast_arrays(np.asarray(x), np.asarray(y))
        vals = [self.evaluator.entry(i, j, int(a), int(b)) for a, b in zip(x.ravel(), y.ravel())]
        return np.array(vals).reshape(x.shape)


def _geo_cutoff(ev, start: int, limit: int = 1 << 14):
    """First X past start where the diagonal of K11 + K22 falls below GEO_TAIL."""
    X = start + 16
    while X < limit:
        if abs(ev.entry(1, 1, X, X)) + abs(ev.entry(2, 2, X, X)) < GEO_TAIL:
            return X
        X = start + 2 * (X - start)
    raise NonConvergenceError("geometric kernel diagonal does not decay")


def geometric_cdf(p: FiniteNParams, s: float) -> DetResult:
    """P(L <= s) for geometric weights: discrete determinant over s+1, ..., X."""
    from .contours import GeometricEvaluator

    if s < 0:
        return DetResult(0.0, 0.0)
    s0 = int(math.floor(s))
    ev = GeometricEvaluator(p.q, p.alpha, p.beta, p.m, p.n)
    X = _geo_cutoff(ev, s0)
    points = np.arange(s0 + 1, X + 1, dtype=float)
    return fredholm_det_discrete(GeometricKernel(ev), points)
