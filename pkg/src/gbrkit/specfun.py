"""Real Airy function machinery: Ai, Ai', the Airy kernel and weighted moments.

Ai and Ai' are evaluated from Taylor expansions of the Airy ODE y'' = x y
about anchor points spaced 0.25 apart on [-40.25, 40]. The anchors are
built once: the negative half by stepping down from the closed-form values
at the origin, the positive half by stepping down from the large-x
asymptotic expansion at x = 40 (the stable direction for the decaying
solution). Beyond x = 40 the asymptotic series is used directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .quadrature import composite_rule, gauss_legendre

AI0 = 3.0 ** (-2.0 / 3.0) / math.gamma(2.0 / 3.0)
AIP0 = -(3.0 ** (-1.0 / 3.0)) / math.gamma(1.0 / 3.0)

X_MIN = -40.0
X_MAX = 200.0
_ANCHOR_STEP = 0.25
_ANCHOR_LO = -40.25
_ANCHOR_HI = 40.0
_TAYLOR_TERMS = 28
# log of the smallest normal double; Ai is reported as 0 past this
_LOG_TINY = math.log(np.finfo(float).tiny)


@dataclass(frozen=True)
class AiryValue:
    ai: float
    ai_prime: float
    underflow: bool = False


def _taylor_step(x0, y0, dy0, h, terms=40):
    c_prev2, c_prev1 = y0, dy0
    val = y0 + dy0 * h
    der = dy0
    coeffs = [y0, dy0]
    for j in range(2, terms):
        # c_j j (j-1) = x0 c_{j-2} + c_{j-3}
        cj = (x0 * coeffs[j - 2] + (coeffs[j - 3] if j >= 3 else 0.0)) / (j * (j - 1))
        coeffs.append(cj)
        val += cj * h ** j
        der += j * cj * h ** (j - 1)
    return val, der


def _asymptotic_positive(x):
    """Large-x expansion of Ai and Ai' (x >= 40 keeps it at full precision)."""
    x = np.asarray(x, dtype=float)
    zeta = 2.0 / 3.0 * x ** 1.5
    u = 1.0
    sum_ai = np.ones_like(x)
    sum_aip = np.ones_like(x)
    sign = 1.0
    for k in range(1, 12):
        u = u * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216.0 * k)
        v = -(6 * k + 1) / (6 * k - 1) * u
        sign = -sign
        sum_ai = sum_ai + sign * u / zeta ** k
        sum_aip = sum_aip + sign * v / zeta ** k
    log_pref = -zeta - math.log(2.0 * math.sqrt(math.pi))
    ai = np.exp(log_pref - 0.25 * np.log(x)) * sum_ai
    aip = -np.exp(log_pref + 0.25 * np.log(x)) * sum_aip
    return ai, aip


def _build_anchors():
    n_neg = int(round(-_ANCHOR_LO / _ANCHOR_STEP))
    n_pos = int(round(_ANCHOR_HI / _ANCHOR_STEP))
    xs = _ANCHOR_LO + _ANCHOR_STEP * np.arange(n_neg + n_pos + 1)
    ai = np.empty_like(xs)
    aip = np.empty_like(xs)
    ai[n_neg], aip[n_neg] = AI0, AIP0
    y, dy = AI0, AIP0
    for i in range(n_neg, 0, -1):
        y, dy = _taylor_step(xs[i], y, dy, -_ANCHOR_STEP)
        ai[i - 1], aip[i - 1] = y, dy
    a_hi, ap_hi = _asymptotic_positive(np.array([_ANCHOR_HI]))
    y, dy = float(a_hi[0]), float(ap_hi[0])
    ai[-1], aip[-1] = y, dy
    for i in range(len(xs) - 1, n_neg + 1, -1):
        y, dy = _taylor_step(xs[i], y, dy, -_ANCHOR_STEP)
        ai[i - 1], aip[i - 1] = y, dy
    return xs, ai, aip


_ANCHOR_X, _ANCHOR_AI, _ANCHOR_AIP = _build_anchors()


def taylor_coefficients(x, order):
    """Taylor coefficients of Ai about each point of ``x``; shape (order+1, len(x))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    a, ap, _ = _airy_arrays(x)
    c = np.zeros((order + 1,) + x.shape)
    c[0] = a
    if order >= 1:
        c[1] = ap
    for j in range(2, order + 1):
        prev3 = c[j - 3] if j >= 3 else 0.0
        c[j] = (x * c[j - 2] + prev3) / (j * (j - 1))
    return c


def _airy_arrays(x):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < X_MIN) or np.any(x > X_MAX):
        bad = x[(~np.isfinite(x)) | (x < X_MIN) | (x > X_MAX)].ravel()[0]
        raise DomainError(f"Airy argument {bad} outside the accuracy window [{X_MIN}, {X_MAX}]")
    ai = np.zeros_like(x)
    aip = np.zeros_like(x)
    under = np.zeros(x.shape, dtype=bool)

    near = x <= _ANCHOR_HI
    if np.any(near):
        xn = x[near]
        idx = np.clip(np.rint((xn - _ANCHOR_LO) / _ANCHOR_STEP).astype(int), 0, len(_ANCHOR_X) - 1)
        x0 = _ANCHOR_X[idx]
        h = xn - x0
        c0 = _ANCHOR_AI[idx]
        c1 = _ANCHOR_AIP[idx]
        cm2, cm1 = c0, c1  # c_{j-2}, c_{j-1}
        cm3 = np.zeros_like(c0)
        val = c0 + c1 * h
        der = c1.copy()
        hp = h.copy()  # h^(j-1)
        for j in range(2, _TAYLOR_TERMS):
            cj = (x0 * cm2 + cm3) / (j * (j - 1))
            der = der + j * cj * hp
            hp = hp * h
            val = val + cj * hp
            cm3, cm2, cm1 = cm2, cm1, cj
        ai[near] = val
        aip[near] = der

    far = ~near
    if np.any(far):
        xf = x[far]
        zeta = 2.0 / 3.0 * xf ** 1.5
        log_mag = -zeta - 0.25 * np.log(xf) - math.log(2.0 * math.sqrt(math.pi))
        ok = log_mag + 0.5 * np.log(xf) > _LOG_TINY
        a_f = np.zeros_like(xf)
        ap_f = np.zeros_like(xf)
        if np.any(ok):
            a_f[ok], ap_f[ok] = _asymptotic_positive(xf[ok])
        ai[far] = a_f
        aip[far] = ap_f
        under[far] = ~ok
    return ai, aip, under


def airy(x) -> AiryValue:
    """Ai and Ai' at a scalar point, with the underflow flag."""
    a, ap, u = _airy_arrays(np.array([float(x)]))
    return AiryValue(float(a[0]), float(ap[0]), bool(u[0]))


def airy_ai(x):
    """Ai(x) for scalars or arrays; accurate on [-40, 200], 0 past underflow."""
    a, _, _ = _airy_arrays(x)
    return float(a) if np.ndim(x) == 0 else a


def airy_ai_prime(x):
    _, ap, _ = _airy_arrays(x)
    return float(ap) if np.ndim(x) == 0 else ap


def airy_pair(x):
    """(Ai, Ai') as arrays."""
    a, ap, _ = _airy_arrays(x)
    return a, ap


# ---------------------------------------------------------------------------
# Airy kernel and partial derivatives

_SERIES_ORDER = 30
_SERIES_RADIUS = 0.5  # |xi - zeta| below this uses the midpoint expansion


def _mul(p, q, order):
    out = np.zeros((order + 1,) + p.shape[1:])
    for i in range(order + 1):
        out[i:] += p[i] * q[: order + 1 - i]
    return out


def _midpoint_series(mid, order):
    """Series in e of Ai, Ai' at mid +/- e."""
    c = taylor_coefficients(mid, order + 1)
    j = np.arange(order + 1)[:, None]
    a_plus = c[: order + 1]
    b_plus = (j + 1) * c[1: order + 2]
    alt = (-1.0) ** j
    return a_plus, b_plus, alt * a_plus, alt * b_plus


def _eval_series(coef, e):
    out = np.zeros_like(e)
    for k in range(coef.shape[0] - 1, -1, -1):
        out = out * e + coef[k]
    return out


def _kernel_near(xi, zeta, want_partials):
    mid = 0.5 * (xi + zeta)
    e = 0.5 * (xi - zeta)
    order = _SERIES_ORDER
    a_p, b_p, a_m, b_m = _midpoint_series(mid, order)
    # numerator of K (odd in e), divided by 2e
    num_k = _mul(a_p, b_m, order) - _mul(b_p, a_m, order)
    k_ser = 0.5 * num_k[1:]
    k_val = _eval_series(k_ser, e)
    if not want_partials:
        return k_val
    k_ser = np.concatenate([k_ser, np.zeros((1,) + k_ser.shape[1:])])
    shift = np.zeros((order + 1,) + mid.shape)
    shift[0] = mid
    shift[1] = 1.0
    ashift = shift.copy()
    ashift[1] = -1.0  # zeta = mid - e
    aa = _mul(a_p, a_m, order)
    num_d1 = _mul(b_p, b_m, order) - _mul(shift, aa, order) - k_ser
    d1_ser = 0.5 * num_d1[1:]
    d1 = _eval_series(d1_ser, e)
    d2 = -_eval_series(aa, e) - d1
    d1_full = np.concatenate([d1_ser, np.zeros((1,) + mid.shape)])
    d2_full = -aa - d1_full
    num_d12 = (_mul(_mul(ashift, a_m, order), b_p, order)
               - _mul(_mul(shift, a_p, order), b_m, order) + d1_full - d2_full)
    d12 = _eval_series(0.5 * num_d12[1:], e)
    return k_val, d1, d2, d12


def airy_kernel(xi, zeta):
    """K_Ai(xi, zeta) = int_0^inf Ai(xi+l) Ai(zeta+l) dl, broadcasting over inputs."""
    xi, zeta = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(zeta, dtype=float))
    scalar = xi.ndim == 0
    xi = np.atleast_1d(xi).astype(float)
    zeta = np.atleast_1d(zeta).astype(float)
    out = np.empty(xi.shape)
    near = np.abs(xi - zeta) < _SERIES_RADIUS
    if np.any(near):
        out[near] = _kernel_near(xi[near], zeta[near], False)
    far = ~near
    if np.any(far):
        a1, b1 = airy_pair(xi[far])
        a2, b2 = airy_pair(zeta[far])
        out[far] = (a1 * b2 - b1 * a2) / (xi[far] - zeta[far])
    return float(out[0]) if scalar else out


def airy_kernel_partials(xi, zeta):
    """(d1, d2, d12): derivatives of K_Ai in its first, second and both arguments."""
    xi, zeta = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(zeta, dtype=float))
    scalar = xi.ndim == 0
    xi = np.atleast_1d(xi).astype(float)
    zeta = np.atleast_1d(zeta).astype(float)
    d1 = np.empty(xi.shape)
    d2 = np.empty(xi.shape)
    d12 = np.empty(xi.shape)
    near = np.abs(xi - zeta) < _SERIES_RADIUS
    if np.any(near):
        _, d1[near], d2[near], d12[near] = _kernel_near(xi[near], zeta[near], True)
    far = ~near
    if np.any(far):
        x, z = xi[far], zeta[far]
        a1, b1 = airy_pair(x)
        a2, b2 = airy_pair(z)
        diff = x - z
        k = (a1 * b2 - b1 * a2) / diff
        p1 = (b1 * b2 - x * a1 * a2 - k) / diff
        p2 = -a1 * a2 - p1
        d1[far] = p1
        d2[far] = p2
        d12[far] = (z * a2 * b1 - x * a1 * b2 + p1 - p2) / diff
    if scalar:
        return float(d1[0]), float(d2[0]), float(d12[0])
    return d1, d2, d12


# ---------------------------------------------------------------------------
# Weighted moments  int_0^inf l^p Ai(xi + l) e^{c l} dl


def _log_ai_bound(u):
    u = max(u, 1.0)
    return -2.0 / 3.0 * u ** 1.5 - 0.25 * math.log(u) - math.log(2.0 * math.sqrt(math.pi))


def _upper_cutoff(xi, c, floor=-41.5):
    """Absolute point u beyond which l^p Ai(u) e^{c(u - xi)} is below ~1e-18 of the scale."""
    ref = _log_ai_bound(xi) if xi > 1.0 else 0.0
    target = min(floor, ref + floor)
    u = max(xi, 1.0) + 1.0
    while True:
        lam = u - xi
        log_term = _log_ai_bound(u) + c * lam + math.log(max(lam, 1.0))
        if log_term < target and (c <= 0 or math.sqrt(u) > c):
            return min(u, X_MAX)
        u += 1.0


def weighted_airy_moment(xi: float, c: float, p: int, tol: float = 1e-11) -> float:
    """int_0^inf l^p Ai(xi + l) e^{c l} dl for p in {0, 1}.

    Gauss-Legendre panels on [0, L] where the integrand has decayed below
    1e-18; the panel count is doubled until two results agree to ``tol``.
    """
    if p not in (0, 1):
        raise DomainError(f"moment order must be 0 or 1, got {p}")
    xi = float(xi)
    upper = _upper_cutoff(xi, c) - xi
    panels = max(4, int(math.ceil(upper / 2.0)))
    prev = None
    for _ in range(8):
        rule = composite_rule(0.0, upper, panels, 16)
        lam = rule.nodes
        vals = airy_ai(xi + lam) * np.exp(c * lam) * (lam if p == 1 else 1.0)
        cur = float(np.sum(rule.weights * vals))
        if prev is not None and abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        prev = cur
        panels *= 2
    return cur


def weighted_airy_moments(xs, c: float, p: int = 0):
    """Vectorized weighted moments for many base points at once.

    Uses m(x) = int_x^inf e^{c(u-x)} Ai(u) du, accumulated leftwards across
    the sorted base points with a panel rule on each gap, which keeps the
    total work proportional to the covered range.
    Returns moments of order 0 and, if p == 1, order 1 as a tuple.
    """
    xs = np.asarray(xs, dtype=float)
    flat = xs.ravel()
    if flat.size == 0:
        return (flat.reshape(xs.shape),) * (2 if p == 1 else 1) if p == 1 else flat.reshape(xs.shape)
    pts, inverse = np.unique(flat, return_inverse=True)
    top = _upper_cutoff(float(pts[-1]), c)
    edges = np.append(pts, max(top, pts[-1]))
    gl = gauss_legendre(16)
    m0 = np.zeros(len(pts))
    m1 = np.zeros(len(pts))
    # integrate every gap, split into panels of length <= 1
    gaps = np.diff(edges)
    counts = np.maximum(1, np.ceil(gaps / 1.0).astype(int))
    gap_id = np.repeat(np.arange(len(gaps)), counts)
    within = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    width = gaps[gap_id] / counts[gap_id]
    left = edges[gap_id] + within * width
    half = 0.5 * width
    u = left[:, None] + half[:, None] * (gl.nodes[None, :] + 1.0)
    offset = u - edges[gap_id][:, None]
    w = half[:, None] * gl.weights[None, :]
    f = airy_ai(u) * np.exp(c * offset) * w
    seg0 = np.bincount(gap_id, weights=f.sum(axis=1), minlength=len(gaps))
    seg1 = np.bincount(gap_id, weights=(f * offset).sum(axis=1), minlength=len(gaps))
    grow = np.exp(c * gaps)
    nxt0 = 0.0
    nxt1 = 0.0
    for i in range(len(pts) - 1, -1, -1):
        cur0 = seg0[i] + grow[i] * nxt0
        cur1 = seg1[i] + grow[i] * (nxt1 + gaps[i] * nxt0)
        m0[i], m1[i] = cur0, cur1
        nxt0, nxt1 = cur0, cur1
    out0 = m0[inverse].reshape(xs.shape)
    if p == 1:
        return out0, m1[inverse].reshape(xs.shape)
    return out0
