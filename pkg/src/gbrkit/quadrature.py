"""Quadrature rules: Gauss-Legendre panels, half-line maps and circle rules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NonConvergenceError, SizeError

MAX_GL_NODES = 512
DEFAULT_SCALE = 8.0


@dataclass(frozen=True)
class QuadRule:
    """Nodes and weights for one integration domain.

    ``domain`` is a tuple whose first entry is the kind: ``("interval", a, b)``,
    ``("halfline", s)`` or ``("circle", center, radius)``. Weights already
    include the Jacobian of the map, so ``sum(w * f(x))`` approximates the
    integral directly. Circle weights are complex and include ``dz``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    domain: tuple

    def __post_init__(self):
        for arr in (self.nodes, self.weights):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.nodes)

    def integrate(self, f):
        return np.sum(self.weights * f(self.nodes))


def _legendre_with_derivative(n, x):
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


@lru_cache(maxsize=64)
def _gl_cached(n):
    if n == 1:
        return np.array([0.0]), np.array([2.0])
    m = (n + 1) // 2
    i = np.arange(1, m + 1)
    # Tricomi-type initial guess, then Newton
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(100):
        p, dp = _legendre_with_derivative(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    p, dp = _legendre_with_derivative(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    if n % 2 == 1:
        x[-1] = 0.0
    nodes = np.concatenate([-x, x[: n // 2][::-1]])
    weights = np.concatenate([w, w[: n // 2][::-1]])
    order = np.argsort(nodes)
    return nodes[order], weights[order]


def gauss_legendre(n: int) -> QuadRule:
    """Gauss-Legendre rule on (-1, 1), exact for polynomials of degree 2n-1."""
    if not isinstance(n, (int, np.integer)) or n < 1 or n > MAX_GL_NODES:
        raise SizeError(f"Gauss-Legendre size must lie in [1, {MAX_GL_NODES}], got {n}")
    x, w = _gl_cached(int(n))
    return QuadRule(x.copy(), w.copy(), ("interval", -1.0, 1.0))


def interval_rule(a: float, b: float, n: int) -> QuadRule:
    base = gauss_legendre(n)
    half = 0.5 * (b - a)
    return QuadRule(a + half * (base.nodes + 1.0), half * base.weights, ("interval", a, b))


def composite_rule(a: float, b: float, panels: int, per_panel: int = 16) -> QuadRule:
    """Gauss-Legendre on ``panels`` equal sub-intervals of [a, b]."""
    base = gauss_legendre(per_panel)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    nodes = (edges[:-1, None] + half[:, None] * (base.nodes[None, :] + 1.0)).ravel()
    weights = (half[:, None] * base.weights[None, :]).ravel()
    return QuadRule(nodes, weights, ("interval", a, b))


def halfline_rule(s: float, n: int, scale: float = DEFAULT_SCALE) -> QuadRule:
    """Rule on (s, inf) through the rational map x = s + scale (1+t)/(1-t)."""
    if n < 4:
        raise SizeError(f"half-line rule needs n >= 4, got {n}")
    if scale <= 0:
        raise SizeError(f"half-line scale must be positive, got {scale}")
    base = gauss_legendre(n)
    t = base.nodes
    nodes = s + scale * (1.0 + t) / (1.0 - t)
    weights = base.weights * 2.0 * scale / (1.0 - t) ** 2
    return QuadRule(nodes, weights, ("halfline", s))


def circle_rule(center: complex, radius: float, n: int) -> QuadRule:
    """Periodic trapezoid rule for the anticlockwise circle integral of f dz."""
    if radius <= 0:
        raise SizeError(f"circle radius must be positive, got {radius}")
    if n < 8:
        raise SizeError(f"circle rule needs n >= 8, got {n}")
    phase = np.exp(2j * np.pi * np.arange(n) / n)
    nodes = center + radius * phase
    weights = (2j * np.pi * radius / n) * phase
    return QuadRule(nodes, weights, ("circle", complex(center), float(radius)))


def refine_until(evaluator, tol: float, n0: int, n_max: int = MAX_GL_NODES):
    """Double the rule size until two successive values agree to ``tol``.

    Returns ``(value, error_estimate)`` where the estimate is the last
    difference. Raises NonConvergenceError with the last two values otherwise.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = n0
    prev = evaluator(n)
    last = (prev, None)
    while True:
        n *= 2
        if n > n_max:
            raise NonConvergenceError(
                f"no convergence to {tol:g} by n={n // 2}", last_values=last
            )
        cur = evaluator(n)
        err = float(np.max(np.abs(np.asarray(cur) - np.asarray(prev))))
        last = (prev, cur)
        if err <= tol:
            return cur, err
        prev = cur


def refine_richardson(evaluator, tol: float, n0: int, n_max: int = MAX_GL_NODES, order: int = 2):
    """Like refine_until, but extrapolates pairs (n, 2n) assuming an n**-order error.

    Used for kernels with a derivative jump on the diagonal, where plain
    Gauss-Legendre Nystrom converges only algebraically.
    """
    factor = 2.0 ** order
    n = n0
    values = [evaluator(n)]
    extrapolated = []
    while True:
        n *= 2
        if n > n_max:
            last = tuple(extrapolated[-2:]) if len(extrapolated) >= 2 else tuple(values[-2:])
            raise NonConvergenceError(
                f"no extrapolated convergence to {tol:g} by n={n // 2}", last_values=last
            )
        values.append(evaluator(n))
        extrapolated.append((factor * values[-1] - values[-2]) / (factor - 1.0))
        if len(extrapolated) >= 2:
            err = float(np.max(np.abs(np.asarray(extrapolated[-1]) - np.asarray(extrapolated[-2]))))
            if err <= tol:
                return extrapolated[-1], err


def pairwise_sum(values):
    """Deterministic pairwise reduction, used where bit-stable sums matter."""
    arr = np.asarray(values)
    while arr.shape[0] > 1:
        if arr.shape[0] % 2:
            arr = np.concatenate([arr, np.zeros_like(arr[:1])])
        arr = arr[0::2] + arr[1::2]
    return arr[0] if arr.shape[0] else 0.0
