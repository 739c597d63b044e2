"""Nystrom discretization of Fredholm determinants and the Airy resolvent.

Kernels here decay superexponentially to the right, so by default the
operator is discretized on a truncated interval [s, s + span] with a single
Gauss-Legendre panel (the half-line map is still available through
``halfline=True``). Matrices use the symmetric sqrt(w) weighting.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DomainError, NonConvergenceError
from .quadrature import MAX_GL_NODES, QuadRule, gauss_legendre, halfline_rule, interval_rule, refine_richardson, refine_until
from .specfun import airy_kernel

GROWTH_LIMIT = 1e12
DEFAULT_N = 48
AIRY_SPAN = 14.0  # beyond max(s, 0) + 14 the Airy kernel is below e^-65


@dataclass(frozen=True)
class DetResult:
    """A determinant value together with its quality report."""

    value: float
    error: float
    nodes: int = 0
    growth: float = 1.0
    ill_conditioned: bool = False

    @property
    def out_of_range(self):
        return not (-1e-6 <= self.value <= 1.0 + 1e-6)

    def __float__(self):
        return float(self.value)


@dataclass
class NystromSystem:
    """Discretized operator: rule, the weighted matrix, and its block conjugation."""

    rule: QuadRule
    matrix: np.ndarray
    conjugation: tuple = field(default=())

    def determinant(self):
        value, growth = lu_determinant(np.eye(len(self.matrix)) - self.matrix)
        return value, growth


class MatrixKernel2x2:
    """Four kernel entries K_ij(x, y) plus an optional diagonal conjugation.

    ``entry(i, j, X, Y)`` receives broadcastable arrays and returns real values.
    ``conjugation`` is a pair of functions (u1, u2); the discretized entry
    (i, j) is multiplied by u_i(x) / u_j(y), which leaves det(I - K) unchanged.
    ``kinked`` marks kernels with a derivative jump on the diagonal that is
    not supplied in Volterra form; their determinants are Richardson
    extrapolated in the rule size.

    A kink can instead be declared through ``volterra``: ``blocks`` then
    returns the smooth continuation of the y >= x branch and
    ``volterra(i, j, X, T)`` returns D_ij(x, t), so that the true entry is
    blocks + 1[t < x] D. The Volterra part is integrated exactly against the
    polynomial interpolant on the nodes, which restores spectral convergence.
    Kernels may also declare ``volterra_upper_blocks``: then
    ``volterra_upper(i, j, X, T)`` is added where t > x.
    """

    volterra_blocks = ()
    volterra_upper_blocks = ()

    def __init__(self, entry, conjugation=None, kinked=False, span=AIRY_SPAN):
        self._entry = entry
        self.conjugation = conjugation
        self.kinked = kinked
        self.span = span

    def volterra(self, i, j, x, t):
        raise NotImplementedError

    def volterra_upper(self, i, j, x, t):
        raise NotImplementedError

    def entry(self, i, j, x, y):
        return self._entry(i, j, x, y)

    def blocks(self, x):
        """All four blocks on the node vector x, as a dict keyed by (i, j)."""
        X, Y = np.meshgrid(x, x, indexing="ij")
        return {(i, j): np.asarray(self.entry(i, j, X, Y), dtype=float) for i in (1, 2) for j in (1, 2)}


def equilibrate(a):
    """Row and column scalings r, c (powers of two) with diag(r) a diag(c) balanced."""
    absa = np.abs(a)
    row = absa.max(axis=1)
    row[row == 0] = 1.0
    r = 2.0 ** -np.round(np.log2(row))
    col = (absa * r[:, None]).max(axis=0)
    col[col == 0] = 1.0
    c = 2.0 ** -np.round(np.log2(col))
    return r, c


def lu_determinant(a):
    """det(a) by LU with partial pivoting, plus the growth factor max|U| / max|a|.

    Rows and columns are equilibrated first (exact power-of-two scalings
    divided back out of the determinant), so strongly conjugated matrices
    keep the pivot choices of the balanced problem.
    """
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 1.0, 1.0
    r, c = equilibrate(a)
    scaled = a * r[:, None] * c[None, :]
    with warnings.catch_warnings():
        # an exactly singular matrix is reported as det 0 below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(scaled, check_finite=True)
    diag = np.diag(lu)
    swaps = np.count_nonzero(piv != np.arange(len(piv)))
    sign = -1.0 if swaps % 2 else 1.0
    scale = np.max(np.abs(scaled))
    growth = float(np.max(np.abs(np.triu(lu))) / scale) if scale > 0 else 1.0
    if np.any(diag == 0):
        return 0.0, growth
    sign *= np.prod(np.sign(diag))
    # product in log space keeps tiny or huge partial products from overflowing
    log_det = np.sum(np.log(np.abs(diag))) - np.sum(np.log(r)) - np.sum(np.log(c))
    if log_det > 709.0:
        return float(sign * np.inf), growth
    return float(sign * math.exp(log_det)), growth


def _rule(s, n, span, halfline):
    if halfline:
        return halfline_rule(s, n)
    return interval_rule(s, s + span, n)


def default_span(s, span=AIRY_SPAN):
    """Truncation length so that the interval reaches max(s, 0) + span."""
    return max(0.0, -s) + span


def nystrom_scalar(kernel, rule):
    x = rule.nodes
    root_w = np.sqrt(rule.weights)
    X, Y = np.meshgrid(x, x, indexing="ij")
    mat = root_w[:, None] * np.asarray(kernel(X, Y), dtype=float) * root_w[None, :]
    return NystromSystem(rule, mat)


def fredholm_det_scalar(kernel, s: float, tol: float = 1e-8, n0: int = DEFAULT_N,
                        span: float | None = None, halfline: bool = False) -> DetResult:
    """det(I - K) on (s, inf) for a scalar kernel K(x, y), refined by rule doubling."""
    length = default_span(s) if span is None else span
    info = {}

    def evaluate(n):
        system = nystrom_scalar(kernel, _rule(s, n, length, halfline))
        value, growth = system.determinant()
        info["n"], info["growth"] = n, growth
        return value

    value, err = refine_until(evaluate, tol, n0)
    return DetResult(value, err, info["n"], info["growth"], info["growth"] > GROWTH_LIMIT)


def barycentric_matrix(nodes, targets):
    """L[k, b] = value at targets[k] of the Lagrange basis polynomial of nodes[b]."""
    nodes = np.asarray(nodes, dtype=float)
    targets = np.asarray(targets, dtype=float)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    # log-scaled barycentric weights avoid overflow for large node counts
    log_abs = -np.sum(np.log(np.abs(diff)), axis=1)
    sign = np.prod(np.sign(diff), axis=1)
    bary = sign * np.exp(log_abs - log_abs.max())
    gap = targets[:, None] - nodes[None, :]
    hit = gap == 0.0
    gap[hit] = 1.0
    terms = bary[None, :] / gap
    out = terms / terms.sum(axis=1, keepdims=True)
    rows = np.any(hit, axis=1)
    if np.any(rows):
        out[rows] = hit[rows].astype(float)
    return out


def volterra_matrix(kernel, i, j, rule: QuadRule, chunk: int = 64, upper: bool = False):
    """Nodal matrix of f -> int_a^x D_ij(x, t) f(t) dt with f interpolated on the nodes.

    With ``upper`` the integral runs over [x, b] against volterra_upper instead.
    """
    x = rule.nodes
    a, b = rule.domain[1], rule.domain[2]
    n = len(x)
    base = gauss_legendre(n)
    out = np.empty((n, n))
    piece = kernel.volterra_upper if upper else kernel.volterra
    for start in range(0, n, chunk):
        rows = slice(start, min(n, start + chunk))
        xr = x[rows]
        lo, hi = (xr, np.full_like(xr, b)) if upper else (np.full_like(xr, a), xr)
        half = 0.5 * (hi - lo)
        t = lo[:, None] + half[:, None] * (base.nodes[None, :] + 1.0)
        w = half[:, None] * base.weights[None, :]
        d = np.asarray(piece(i, j, np.broadcast_to(xr[:, None], t.shape), t), dtype=float)
        interp = barycentric_matrix(x, t.ravel()).reshape(t.shape + (n,))
        out[rows] = np.einsum("rk,rkb->rb", w * d, interp)
    return out


def nystrom_2x2(kernel: MatrixKernel2x2, rule: QuadRule, conjugation=None) -> NystromSystem:
    """Assemble the 2n x 2n weighted block matrix."""
    x = rule.nodes
    n = len(x)
    root_w = np.sqrt(np.abs(rule.weights))
    conj = conjugation if conjugation is not None else kernel.conjugation
    if conj is None:
        factors = (np.ones(n), np.ones(n))
    else:
        factors = (np.asarray(conj[0](x), dtype=float), np.asarray(conj[1](x), dtype=float))
        if np.any(factors[0] <= 0) or np.any(factors[1] <= 0):
            raise DomainError("conjugation factors must be strictly positive")
    blocks = kernel.blocks(x)
    if kernel.volterra_blocks or kernel.volterra_upper_blocks:
        if rule.domain[0] != "interval":
            raise DomainError("Volterra corrections need a single-panel interval rule")
        # the Volterra matrices already carry the quadrature weights
        for key in kernel.volterra_blocks:
            blocks[key] = blocks[key] + volterra_matrix(kernel, key[0], key[1], rule) / np.abs(rule.weights)[None, :]
        for key in kernel.volterra_upper_blocks:
            extra = volterra_matrix(kernel, key[0], key[1], rule, upper=True)
            blocks[key] = blocks[key] + extra / np.abs(rule.weights)[None, :]
    mat = np.empty((2 * n, 2 * n))
    for (i, j), block in blocks.items():
        scaled = (factors[i - 1] * root_w)[:, None] * block * (root_w / factors[j - 1])[None, :]
        mat[(i - 1) * n: i * n, (j - 1) * n: j * n] = scaled
    return NystromSystem(rule, mat, factors)


def det_on_rule(kernel: MatrixKernel2x2, rule: QuadRule, conjugation=None):
    """(det(I - M), growth) for one fixed discretization."""
    return nystrom_2x2(kernel, rule, conjugation).determinant()


def fredholm_det_2x2(entries, s: float, conjugation=None, tol: float = 1e-8, n0: int = 32,
                     span: float | None = None, n_max: int = MAX_GL_NODES,
                     halfline: bool = False) -> DetResult:
    """det(I - P_s K P_s) for a 2x2 matrix kernel on (s, inf).

    ``entries`` is a MatrixKernel2x2 or a plain callable entry(i, j, X, Y).
    Kinked kernels are extrapolated from rule pairs (n, 2n) assuming an
    n^-2 leading error; smooth kernels use plain doubling.
    """
    kernel = entries if isinstance(entries, MatrixKernel2x2) else MatrixKernel2x2(entries)
    length = default_span(s, kernel.span) if span is None else span
    info = {"growth": 1.0}

    def evaluate(n):
        value, growth = det_on_rule(kernel, _rule(s, n, length, halfline), conjugation)
        info["n"] = n
        info["growth"] = max(info["growth"], growth)
        return value

    if kernel.kinked:
        value, err = refine_richardson(evaluate, tol, n0, n_max=n_max)
    else:
        value, err = refine_until(evaluate, tol, n0, n_max=n_max)
    return DetResult(value, err, info["n"], info["growth"], info["growth"] > GROWTH_LIMIT)


def fredholm_det_discrete(entries, points, conjugation=None) -> DetResult:
    """det(I - K) over a finite set of lattice points with unit weights."""
    kernel = entries if isinstance(entries, MatrixKernel2x2) else MatrixKernel2x2(entries)
    pts = np.asarray(points, dtype=float)
    rule = QuadRule(pts.copy(), np.ones_like(pts), ("lattice", float(pts[0]) if len(pts) else 0.0))
    value, growth = det_on_rule(kernel, rule, conjugation)
    return DetResult(value, 0.0, len(pts), growth, growth > GROWTH_LIMIT)


class AiryResolvent:
    """Factorized I - P_t K_Ai P_t on a fixed rule, for repeated inner products.

    ``inner(a_vals, b_vals)`` returns <a|b>_t for function values sampled at
    ``self.nodes`` (absolute positions, i.e. x + t).
    """

    def __init__(self, t: float, n: int, span: float | None = None):
        length = default_span(t) if span is None else span
        self.t = t
        self.rule = interval_rule(t, t + length, n)
        self.nodes = self.rule.nodes
        self.root_w = np.sqrt(self.rule.weights)
        system = nystrom_scalar(airy_kernel, self.rule)
        self.matrix = system.matrix
        self._lu = scipy.linalg.lu_factor(np.eye(n) - system.matrix)

    def solve(self, b_vals):
        return scipy.linalg.lu_solve(self._lu, self.root_w * np.asarray(b_vals, dtype=float))

    def inner(self, a_vals, b_vals):
        return float(np.dot(self.root_w * np.asarray(a_vals, dtype=float), self.solve(b_vals)))

    def determinant(self):
        diag = np.diag(self._lu[0])
        swaps = np.count_nonzero(self._lu[1] != np.arange(len(diag)))
        return float((-1.0) ** swaps * np.prod(diag))


def resolvent_inner(a, b, t: float, tol: float = 1e-9, n0: int = DEFAULT_N):
    """<a|b>_t = int int a(x+t) rho_t(x+t, y+t) b(y+t) dx dy, rho_t = (I - P_t K_Ai P_t)^-1.

    ``a`` and ``b`` are callables of the absolute position. Returns
    (value, error_estimate).
    """

    def evaluate(n):
        res = AiryResolvent(t, n)
        try:
            return res.inner(a(res.nodes), b(res.nodes))
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NonConvergenceError(f"singular resolvent system at t={t}") from exc

    return refine_until(evaluate, tol, n0)
