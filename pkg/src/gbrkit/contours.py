"""Complex integration paths and the contour-integral kernel entries.

Limit kernels (generalized Baik-Rains and its stationary variant) integrate
over Airy-type rays: a left path from e^{-2pi i/3} inf to e^{2pi i/3} inf and
a right path from e^{-pi i/3} inf to e^{pi i/3} inf, through a real vertex.
Finite-N kernels integrate over closed loops around +-1/2 (or around 0 and
the poles for the geometric model).

All double integrals are separable once discretized: with w-nodes W_p and
v-nodes V_q the kernel is a(xi) G b(zeta)^T, so a whole Nystrom block costs
two small matrix products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InfeasibleContourError, NonConvergenceError
from .fredholm import AIRY_SPAN, MatrixKernel2x2
from .quadrature import QuadRule, circle_rule, gauss_legendre, refine_until

DELTA = 0.5
TRUNCATION = 6.0
RAY_PANEL = 1.0
RAY_PER_PANEL = 16
LOOP_NODES = 64
DECAY = 1e-16
LEFT_ANGLE = 2.0 * math.pi / 3.0
RIGHT_ANGLE = math.pi / 3.0
TWO_PI_I = 2j * math.pi
LOG_PRODUCT_THRESHOLD = 8
SIN60 = math.sin(math.pi / 3.0)
DROP = 41.5  # log of the 1e-18 level below which loop pieces are skipped


@dataclass(frozen=True)
class RayPath:
    """Two rays from a real vertex, oriented upward; ``rule`` holds nodes and dz weights."""

    vertex: float
    angle: float
    truncation: float
    rule: QuadRule

    @property
    def side(self):
        return "left" if self.angle > math.pi / 2 else "right"

    @property
    def nodes(self):
        return self.rule.nodes

    @property
    def weights(self):
        return self.rule.weights

    def endpoints(self):
        e = np.exp(1j * self.angle)
        return self.vertex + self.truncation * np.array([np.conj(e), e])


@dataclass(frozen=True)
class PoleLayout:
    """Points that a path must keep on its left / right, with a minimum clearance."""

    left_points: tuple = ()
    right_points: tuple = ()
    min_gap: float = DELTA

    def __post_init__(self):
        object.__setattr__(self, "left_points", tuple(float(p) for p in self.left_points))
        object.__setattr__(self, "right_points", tuple(float(p) for p in self.right_points))
        common = set(self.left_points) & set(self.right_points)
        if common:
            raise InfeasibleContourError(f"point {sorted(common)[0]} is required on both sides of a contour")
        if self.left_points and self.right_points and max(self.left_points) >= min(self.right_points):
            raise InfeasibleContourError(
                f"left points up to {max(self.left_points)} overlap right points from {min(self.right_points)}"
            )


def ray_edges(truncation: float, clearance: float | None = None, scale: int = 1):
    """Panel edges along one ray: geometric grading from ``clearance`` up to unit panels."""
    edges = [0.0]
    h = RAY_PANEL if clearance is None else min(RAY_PANEL, max(clearance, 1e-3))
    while edges[-1] < truncation - 1e-12:
        edges.append(min(truncation, edges[-1] + h))
        h = min(RAY_PANEL, 2.0 * h)
    edges = np.asarray(edges)
    if scale > 1:
        fine = edges[:-1, None] + np.diff(edges)[:, None] * np.arange(scale)[None, :] / scale
        edges = np.append(fine.ravel(), edges[-1])
    return edges


def ray_rule(vertex: float, angle: float, truncation: float = TRUNCATION, scale: int = 1,
             clearance: float | None = None, per_panel: int = RAY_PER_PANEL) -> QuadRule:
    """Composite Gauss-Legendre along both rays; lower ray inward, upper ray outward."""
    base = gauss_legendre(per_panel)
    edges = ray_edges(truncation, clearance, scale)
    half = 0.5 * np.diff(edges)
    r = (edges[:-1, None] + half[:, None] * (base.nodes[None, :] + 1.0)).ravel()
    dr = (half[:, None] * base.weights[None, :]).ravel()
    up = np.exp(1j * angle)
    down = np.conj(up)
    nodes = np.concatenate([vertex + r[::-1] * down, vertex + r * up])
    weights = np.concatenate([-(dr[::-1]) * down, dr * up])
    return QuadRule(nodes, weights, ("rays", float(vertex), float(angle)))


def ray_path(vertex: float, side: str, truncation: float = TRUNCATION, scale: int = 1,
             clearance: float | None = None) -> RayPath:
    angle = LEFT_ANGLE if side == "left" else RIGHT_ANGLE
    return RayPath(float(vertex), angle, float(truncation), ray_rule(vertex, angle, truncation, scale, clearance))


def clearance_of(vertex: float, points=(), loops=()):
    """Distance from a vertex to the nearest pole or residue circle."""
    d = [abs(float(p) - vertex) for p in points]
    d += [abs(lp.domain[1].real - vertex) - lp.domain[2] for lp in loops]
    return min(d) if d else None


def _layout(left_of, right_of):
    if isinstance(left_of, PoleLayout):
        return left_of
    return PoleLayout(tuple(left_of or ()), tuple(right_of or ()))


def _vertex_between(layout: PoleLayout, prefer: str, delta: float):
    lefts, rights = layout.left_points, layout.right_points
    if lefts and rights:
        lo, hi = max(lefts), min(rights)
        if hi - lo >= 2 * delta:
            return lo + delta if prefer == "right" else hi - delta
        return 0.5 * (lo + hi)
    if prefer == "right":
        return (max(lefts) + delta) if lefts else (min(rights) - delta)
    return (min(rights) - delta) if rights else (max(lefts) + delta)


def build_left_contour(left_of=(), right_of=(), delta: float = DELTA, truncation: float = TRUNCATION,
                       scale: int = 1) -> RayPath:
    """Left Airy path keeping ``left_of`` on its left and ``right_of`` on its right.

    The vertex sits delta to the left of the smallest point that must stay
    right (or delta right of the largest left point when there is none).
    """
    layout = _layout(left_of, right_of)
    if not layout.left_points and not layout.right_points:
        vertex = -delta
    else:
        vertex = _vertex_between(layout, "left", delta)
    near = clearance_of(vertex, layout.left_points + layout.right_points)
    return ray_path(vertex, "left", truncation, scale, near)


def build_right_contour(left_of=(), right_of=(), delta: float = DELTA, truncation: float = TRUNCATION,
                        scale: int = 1) -> RayPath:
    """Right Airy path; the vertex sits delta beyond the largest point kept on its left."""
    layout = _layout(left_of, right_of)
    if not layout.left_points and not layout.right_points:
        vertex = delta
    else:
        vertex = _vertex_between(layout, "right", delta)
    near = clearance_of(vertex, layout.left_points + layout.right_points)
    return ray_path(vertex, "right", truncation, scale, near)


def integrate_double(wpath, vpath, integrand) -> complex:
    """Tensor-product value of int dw int dv integrand(w, v) (no 1/(2 pi i)^2 factor)."""
    W = wpath.rule if hasattr(wpath, "rule") else wpath
    V = vpath.rule if hasattr(vpath, "rule") else vpath
    vals = integrand(W.nodes[:, None], V.nodes[None, :])
    return complex(np.sum(W.weights[:, None] * vals * V.weights[None, :]))


def integrate_single(path, integrand) -> complex:
    R = path.rule if hasattr(path, "rule") else path
    return complex(np.sum(R.weights * integrand(R.nodes)))


def loop_nodes(radius: float, margin: float, n_min: int = LOOP_NODES) -> int:
    """Trapezoid size so the error factor ((r - margin)/r)^n falls below 1e-17."""
    ratio = radius / max(radius - margin, 1e-300)
    need = math.ceil(40.0 / math.log(ratio)) if ratio > 1 else n_min
    return int(8 * math.ceil(max(n_min, need) / 8))


def pole_loops(points, n: int = LOOP_NODES, gap: float = 1.0, margin: float = 0.25):
    """Circles around clusters of real poles (points closer than ``gap`` share a circle).

    Each circle is centred on its cluster and clears the outermost poles by
    ``margin``; the node count grows with radius/margin.
    """
    pts = np.sort(np.asarray(list(points), dtype=float))
    if pts.size == 0:
        return []
    clusters = [[pts[0]]]
    for p in pts[1:]:
        if p - clusters[-1][-1] < gap:
            clusters[-1].append(p)
        else:
            clusters.append([p])
    loops = []
    for c in clusters:
        radius = 0.5 * (c[-1] - c[0]) + margin
        center = 0.5 * (c[0] + c[-1])
        loops.append(circle_rule(center, radius, loop_nodes(radius, margin, n)))
    return loops


def fit_loops(loops, outside: float):
    """Re-size loop rules so singularities ``outside`` beyond the circle cost < 1e-17."""
    out = []
    for lp in loops:
        center, radius = lp.domain[1], lp.domain[2]
        need = math.ceil(40.0 / math.log((radius + outside) / radius))
        n = max(len(lp), int(8 * math.ceil(need / 8)))
        out.append(lp if n == len(lp) else circle_rule(center, radius, n))
    return out


def merge_rules(rules):
    if not rules:
        return QuadRule(np.zeros(0, complex), np.zeros(0, complex), ("empty",))
    return QuadRule(np.concatenate([r.nodes for r in rules]), np.concatenate([r.weights for r in rules]),
                    ("union", len(rules)))


def _loop_extent(loops):
    """(rightmost, leftmost) real reach of a list of circle rules."""
    right = max((r.domain[1].real + r.domain[2] for r in loops), default=-np.inf)
    left = min((r.domain[1].real - r.domain[2] for r in loops), default=np.inf)
    return right, left


def product_factor(z, points, sign: float = 1.0, power: int = 1):
    """prod_i (z + sign * p_i)^power, in log space for long products."""
    z = np.asarray(z)
    pts = list(points)
    if len(pts) > LOG_PRODUCT_THRESHOLD:
        total = np.zeros(z.shape, dtype=complex)
        for p in pts:
            total = total + np.log((z + sign * p).astype(complex))
        return np.exp(power * total)
    out = np.ones(z.shape, dtype=complex)
    for p in pts:
        out = out * (z + sign * p)
    return out ** power if power != 1 else out


# ---------------------------------------------------------------------------
# Generalized Baik-Rains kernel


def _airy_w(path_rule, xi):
    """w-side factors e^{-w^3/3 + w xi} dw / (2 pi i); shape (len(xi), nodes)."""
    W = path_rule.nodes
    return path_rule.weights[None, :] * np.exp(-W[None, :] ** 3 / 3.0 + W[None, :] * np.asarray(xi)[:, None]) / TWO_PI_I


def _airy_v(path_rule, zeta):
    V = path_rule.nodes
    return path_rule.weights[None, :] * np.exp(V[None, :] ** 3 / 3.0 - V[None, :] * np.asarray(zeta)[:, None]) / TWO_PI_I


def decay_truncation(vertex: float, side: str, arg_min: float, arg_max: float, start: float = TRUNCATION,
                     cap: float = 40.0) -> float:
    """Smallest truncation >= start whose endpoint factor is below 1e-16 of the peak.

    The factor is |e^{-w^3/3 + w xi}| on left paths and |e^{v^3/3 - v zeta}| on
    right paths, checked at both ends of the argument range.
    """
    angle = LEFT_ANGLE if side == "left" else RIGHT_ANGLE
    sign = -1.0 if side == "left" else 1.0
    r = np.linspace(0.0, cap, 4001)
    z = vertex + r * np.exp(1j * angle)
    best = start
    for arg in (arg_min, arg_max):
        logmag = (sign * z ** 3 / 3.0).real - sign * (z * arg).real
        peak = logmag.max()
        ok = (logmag < peak + math.log(DECAY)) & (r >= start)
        # all later points must also stay below the threshold
        tail_ok = np.flip(np.cumprod(np.flip(ok)).astype(bool))
        idx = np.argmax(tail_ok) if tail_ok.any() else None
        if idx is None:
            raise NonConvergenceError(f"ray integrand does not decay within truncation {cap}")
        best = max(best, float(r[idx]))
    return best


@dataclass
class GbrLayout:
    """Vertices of every path used by the generalized kernel, and the conjugation lines."""

    line_a: float
    line_b: float
    w11: float
    v11: float
    w22: float
    v22: float
    w21: float
    v21: float
    w12: float
    v12: float
    loops_x: list = field(default_factory=list)
    loops_all: list = field(default_factory=list)
    windowed: bool = False


def gbr_layout(x, y, delta: float = DELTA) -> GbrLayout:
    """Place all paths so a single diagonal conjugation bounds every block.

    Every w-path of the first block row and every pole circle lies left of
    line_a while the v-paths of the first block column lie right of it;
    line_b plays the same role for the second row and column.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    poles = np.concatenate([-y, x])
    loops_x = fit_loops(pole_loops(x), 0.5 * delta)
    loops_all = pole_loops(poles)
    reach = [p.domain[1].real + (p.domain[2] + 0.5 * delta) / SIN60 + 0.5 * delta for p in loops_x]
    line_a = max([poles.max() + 1.5 * delta] + reach)
    _, x_left = _loop_extent(loops_x)
    line_b = min(x.min() - 1.5 * delta, x_left - 0.25)
    # evaluation paths hug their own poles; far-right vertices cost e^{|w|^3/3} in cancellation
    top_y = float(np.max(-y))
    w12, v12, windowed = line_a - 0.5 * delta, line_a + 0.5 * delta, False
    gap = x_left - top_y
    if gap > 1.5 * delta:
        # both K12 paths between -y and the x circles; the x residues are added back
        d = min(delta, gap / 3.0)
        w12, v12, windowed = top_y + d, top_y + 2.0 * d, True
    return GbrLayout(
        line_a=line_a,
        line_b=line_b,
        w11=top_y + 0.5 * delta,
        v11=top_y + 1.5 * delta,
        w22=line_b - 0.5 * delta,
        v22=line_b + 0.5 * delta,
        w21=-0.5 * delta,
        v21=0.5 * delta,
        w12=w12,
        v12=v12,
        loops_x=loops_x,
        loops_all=loops_all,
        windowed=windowed,
    )


def _clear_loops(points, clear_of, cap: float = 0.25, n: int = LOOP_NODES):
    """One small circle per point, shrunk so it keeps clear of the given path vertices."""
    sin60 = math.sin(math.pi / 3.0)
    loops = []
    for p in sorted(set(float(v) for v in points)):
        room = min((abs(c - p) * sin60 for c in clear_of), default=np.inf)
        loops.append(circle_rule(p, min(cap, 0.4 * room), n))
    return loops


def gbr_hat_layout(x, y, delta: float = DELTA) -> GbrLayout:
    """Paths for the stationary-limit kernel, where v-paths of the first block
    column must stay left of x_2..x_ell and w-paths of the second block row
    right of -y_2..-y_k. The positivity pattern makes both windows nonempty."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo_a = float(np.max(-y))
    hi_a = float(np.min(x[1:])) if x.size > 1 else np.inf
    d_a = min(delta, (hi_a - lo_a) / 4.0)
    line_a = lo_a + 2.0 * d_a
    lo_b = float(np.max(-y[1:])) if y.size > 1 else -np.inf
    hi_b = float(np.min(x))
    d_b = min(delta, (hi_b - lo_b) / 4.0)
    line_b = hi_b - 2.0 * d_b
    if not (d_a > 0 and d_b > 0):
        raise InfeasibleContourError("stationary-limit kernel needs x_i + y_j > 0 off the corner")
    w12, v12 = line_a - d_a, line_a + d_a
    inside = [p for p in x if p < v12]
    return GbrLayout(
        line_a=line_a,
        line_b=line_b,
        w11=w12,
        v11=v12,
        w22=line_b - d_b,
        v22=line_b + d_b,
        w21=line_b - d_b,
        v21=v12,
        w12=w12,
        v12=v12,
        loops_x=_clear_loops(inside, (w12, v12)),
        loops_all=_clear_loops([x[0]], (w12,)),
    )


class RationalFactors:
    """Rational prefactors shared by the limit and finite-N kernels.

    ``x`` holds the points paired with the column side (x or alpha) and ``y``
    those paired with the row side (y or beta). With ``hatted`` the first
    entries keep single-factor prefactors and the rest move into h.
    """

    x: np.ndarray
    y: np.ndarray
    hatted: bool = False

    def _ratio11(self, w, v):
        if self.hatted:
            # K-hat_11: pole at w = -y_1 kept, the rest of the row product in h
            return product_factor(v, self.y[:1]) / product_factor(w, self.y[:1]) * self._h(w, v)
        return product_factor(v, self.y) / product_factor(w, self.y)

    def _ratio22(self, w, v):
        if self.hatted:
            return product_factor(w, self.x[:1], -1.0) / product_factor(v, self.x[:1], -1.0) * self._h(w, v)
        return product_factor(w, self.x, -1.0) / product_factor(v, self.x, -1.0)

    def _ratio21(self, w, v):
        if self.hatted:
            return product_factor(v, self.y[:1]) * product_factor(w, self.x[:1], -1.0) * self._h(w, v)
        return product_factor(v, self.y) * product_factor(w, self.x, -1.0)

    def _ratio12(self, w, v):
        if self.hatted:
            return self._h(w, v) / (product_factor(w, self.y[:1]) * product_factor(v, self.x[:1], -1.0))
        return 1.0 / (product_factor(w, self.y) * product_factor(v, self.x, -1.0))

    def _h(self, w, v):
        """prod_{i>=2} (w - x_i)/(v - x_i) * prod_{j>=2} (v + y_j)/(w + y_j)."""
        return (product_factor(w, self.x[1:], -1.0) / product_factor(v, self.x[1:], -1.0)
                * product_factor(v, self.y[1:]) / product_factor(w, self.y[1:]))



RATIO_NAMES = {(1, 1): "_ratio11", (1, 2): "_ratio12", (2, 1): "_ratio21", (2, 2): "_ratio22"}
SADDLE_STEP = 1.0


def _top(p):
    return float(np.max(p)) if len(p) else -np.inf


def _bottom(p):
    return float(np.min(p)) if len(p) else np.inf


def saddle_level(args):
    """sqrt(max(arg, 0)) rounded to the saddle grid."""
    r = np.sqrt(np.maximum(np.asarray(args, dtype=float), 0.0))
    return np.round(r / SADDLE_STEP) * SADDLE_STEP


def clear_of_loops(t: float, loops, margin: float) -> float:
    """Move t right past any circle it would touch (circles never straddle the result)."""
    for lp in sorted(loops, key=lambda r: r.domain[1].real):
        c, rad = lp.domain[1].real, lp.domain[2]
        if c - rad - margin < t < c + rad + margin:
            t = c + rad + margin
    return float(t)


class GbrEvaluator(RationalFactors):
    """Separable evaluation of all entries of the generalized Baik-Rains kernel.

    ``x`` (length ell) and ``y`` (length kay) are the offsets with tau already
    folded in; ``hatted`` selects the stationary-limit prefactors.
    """

    def __init__(self, x, y, delta: float = DELTA, panels_scale: int = 1, hatted: bool = False):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.delta = delta
        self.hatted = hatted
        self.layout = (gbr_hat_layout if hatted else gbr_layout)(self.x, self.y, delta)
        self.panels_scale = panels_scale
        self._paths = {}
        self.loops_y = fit_loops(pole_loops(-self.y), 0.5 * delta) if self.layout.windowed else []

    def _path(self, vertex, side, lo, hi, partner, loops=()):
        trunc = math.ceil(decay_truncation(vertex, side, lo, hi))
        key = (vertex, side, trunc, partner)
        if key not in self._paths:
            poles = np.concatenate([-self.y, self.x, [partner]])
            near = clearance_of(vertex, poles, loops)
            self._paths[key] = ray_path(vertex, side, trunc, self.panels_scale, near).rule
        return self._paths[key]

    def _loops(self, loops):
        if self.panels_scale == 1:
            return merge_rules(loops)
        return merge_rules([circle_rule(r.domain[1], r.domain[2], len(r) * self.panels_scale) for r in loops])

    # entries -------------------------------------------------------------------
    @property
    def windowed(self):
        return self.layout.windowed

    def block(self, i, j, xi, zeta, smooth_only: bool = False):
        """K_ij on the grid xi x zeta (the (1,2) block uses the xi <= zeta branch).

        With ``smooth_only`` and a windowed layout, K12 drops its residue part
        (see ``kink``).
        """
        xi = np.asarray(xi, dtype=float)
        zeta = np.asarray(zeta, dtype=float)
        if (i, j) in RATIO_NAMES and (self.hatted or (i, j) != (1, 2) or self.windowed):
            return self._saddle_block(i, j, xi, zeta, smooth_only)
        return self._line_block(i, j, xi, zeta)

    # Vertices follow the saddles -sqrt(xi) and +sqrt(zeta), quantized so that
    # the grid splits into a few separable pieces, and clipped to the window
    # the poles of each block allow.
    def _window(self, i, j):
        """(w floor, v ceiling, margin): -y poles stay left of w-paths, x poles right of v-paths."""
        x, y = self.x, self.y
        top = float(np.max(-y)) if i == 1 or not self.hatted else _top(-y[1:])
        if self.hatted:
            w_lo = top
            v_hi = float(np.min(x)) if (i, j) == (2, 2) else _bottom(x[1:])
        else:
            w_lo = top if i == 1 else -np.inf
            v_hi = float(np.min(x)) if (i, j) == (2, 2) else np.inf
        room = v_hi - w_lo
        return w_lo, v_hi, min(self.delta, room / 4.0) if np.isfinite(room) else self.delta

    def _w_vertex(self, i, j, xi):
        w_lo, v_hi, d = self._window(i, j)
        w = np.maximum(np.minimum(-saddle_level(xi), -0.5 * d), w_lo + d)
        w = np.minimum(w, v_hi - 2.0 * d)
        if (i, j) == (1, 2) and not self.hatted:
            L = self.layout
            _, x_left = _loop_extent(L.loops_x)
            w = np.minimum(np.maximum(w, L.w12), x_left - 2.0 * (L.v12 - L.w12))
        return w

    def _v_vertex(self, i, j, zeta, w0):
        _, v_hi, d = self._window(i, j)
        v = np.maximum(np.maximum(saddle_level(zeta), 0.5 * d), w0 + d)
        v = np.minimum(v, v_hi - d)
        if (i, j) == (1, 2) and not self.hatted:
            v = np.maximum(v, w0 + (self.layout.v12 - self.layout.w12))
            v = np.array([clear_of_loops(t, self.layout.loops_x, 0.5 * self.delta) for t in v])
        return v

    def _crossed(self, w0, v0):
        """Circles in v subtracted from a K12 piece."""
        if not self.hatted:
            return [lp for lp in self.layout.loops_x if lp.domain[1].real < v0]
        # x_1 = -y_1 sits left of the w-path; a small circle keeps clear of it
        x1 = float(self.x[0])
        radius = min(0.25, 0.4 * SIN60 * (w0 - x1))
        outside = min(w0 - x1, _bottom(self.x[1:]) - x1) - radius
        return fit_loops([circle_rule(x1, radius, LOOP_NODES)], outside)

    def _saddle_block(self, i, j, xi, zeta, smooth_only=False):
        out = np.zeros((xi.size, zeta.size))
        ratio = getattr(self, RATIO_NAMES[(i, j)])
        wv = self._w_vertex(i, j, xi)
        for w0 in np.unique(wv):
            rows = wv == w0
            vv = self._v_vertex(i, j, zeta, w0)
            for v0 in np.unique(vv):
                cols = vv == v0
                xs, zs = xi[rows], zeta[cols]
                lo, hi = min(xs.min(), zs.min()), max(xs.max(), zs.max())
                crossed = self._crossed(w0, v0) if (i, j) == (1, 2) else []
                W = self._path(float(w0), "left", lo, hi, float(v0), crossed)
                V = self._path(float(v0), "right", lo, hi, float(w0), crossed)
                G = ratio(W.nodes[:, None], V.nodes[None, :]) / (V.nodes[None, :] - W.nodes[:, None])
                aw = _airy_w(W, xs)
                val = aw @ G @ _airy_v(V, zs).T
                if crossed:
                    C = self._loops(crossed)
                    Gc = ratio(W.nodes[:, None], C.nodes[None, :]) / (C.nodes[None, :] - W.nodes[:, None])
                    val = val - aw @ Gc @ _airy_v(C, zs).T
                out[np.ix_(rows, cols)] = val.real
        if (i, j) == (1, 2) and not self.hatted and not smooth_only:
            out += self.residues_at(self.layout.loops_x, xi[:, None] - zeta[None, :])
        return out

    def _line_block(self, i, j, xi, zeta):
        lo = min(xi.min(), zeta.min())
        hi = max(xi.max(), zeta.max())
        L = self.layout
        if (i, j) == (1, 1):
            W = self._path(L.w11, "left", lo, hi, L.v11)
            V = self._path(L.v11, "right", lo, hi, L.w11)
            G = self._ratio11(W.nodes[:, None], V.nodes[None, :]) / (V.nodes[None, :] - W.nodes[:, None])
            return (_airy_w(W, xi) @ G @ _airy_v(V, zeta).T).real
        if (i, j) == (2, 2):
            W = self._path(L.w22, "left", lo, hi, L.v22)
            V = self._path(L.v22, "right", lo, hi, L.w22)
            G = self._ratio22(W.nodes[:, None], V.nodes[None, :]) / (V.nodes[None, :] - W.nodes[:, None])
            return (_airy_w(W, xi) @ G @ _airy_v(V, zeta).T).real
        if (i, j) == (2, 1):
            W = self._path(L.w21, "left", lo, hi, L.v21)
            V = self._path(L.v21, "right", lo, hi, L.w21)
            G = self._ratio21(W.nodes[:, None], V.nodes[None, :]) / (V.nodes[None, :] - W.nodes[:, None])
            return (_airy_w(W, xi) @ G @ _airy_v(V, zeta).T).real
        if (i, j) == (1, 2):
            W = self._path(L.w12, "left", lo, hi, L.v12, L.loops_x)
            V = self._path(L.v12, "right", lo, hi, L.w12, L.loops_x)
            C = self._loops(L.loops_x)
            G = self._ratio12(W.nodes[:, None], V.nodes[None, :]) / (V.nodes[None, :] - W.nodes[:, None])
            Gc = self._ratio12(W.nodes[:, None], C.nodes[None, :]) / (C.nodes[None, :] - W.nodes[:, None])
            aw = _airy_w(W, xi)
            return (aw @ G @ _airy_v(V, zeta).T - aw @ Gc @ _airy_v(C, zeta).T).real
        raise DomainError(f"entry index ({i}, {j}) out of range")

    def residues_at(self, loops, u):
        """Sum of residues of e^{wu} times the K12 factor at w = v inside the given loops."""
        C = self._loops(loops)
        coef = C.weights * self._ratio12(C.nodes, C.nodes) / TWO_PI_I
        return (np.exp(np.asarray(u, dtype=float)[..., None] * C.nodes) @ coef).real

    def kink(self, u):
        """K12 minus its windowed double integral: x residues for u <= 0, minus -y residues for u > 0.

        Both pieces decay on their own side, unlike the sum of all residues.
        """
        u = np.asarray(u, dtype=float)
        below = self.residues_at(self.layout.loops_x, np.minimum(u, 0.0))
        above = -self.residues_at(self.loops_y, np.maximum(u, 0.0))
        return np.where(u > 0, above, below)

    def branch_jump(self, xi, zeta):
        """K12 on xi > zeta minus its xi <= zeta continuation.

        The two branches differ by the residue at v = w, which leaves
        -(1/2 pi i) times the loop integral of e^{w(xi - zeta)} times the
        rational factor around all poles.
        """
        C = self._loops(self.layout.loops_all)
        u = np.asarray(xi, dtype=float) - np.asarray(zeta, dtype=float)
        coef = C.weights * self._ratio12(C.nodes, C.nodes) / TWO_PI_I
        return -(np.exp(u[..., None] * C.nodes) @ coef).real


class GbrKernel(MatrixKernel2x2):
    """Generalized Baik-Rains kernel with K12 split into smooth and Volterra parts."""

    volterra_blocks = ((1, 2),)

    def __init__(self, evaluator: GbrEvaluator, origin: float, span: float = AIRY_SPAN):
        self.evaluator = evaluator
        self.origin = origin
        self.span = span
        self.kinked = False
        a = evaluator.layout.line_a
        b = evaluator.layout.line_b
        self.conjugation = (lambda t: np.exp(-a * (t - origin)), lambda t: np.exp(-b * (t - origin)))

        if evaluator.windowed:
            self.volterra_upper_blocks = ((1, 2),)

    def blocks(self, x):
        return {(i, j): self.evaluator.block(i, j, x, x, smooth_only=True) for i in (1, 2) for j in (1, 2)}

    def volterra(self, i, j, x, t):
        if self.evaluator.windowed:
            return self.evaluator.kink(np.asarray(x) - np.asarray(t))
        return self.evaluator.branch_jump(x, t)

    def volterra_upper(self, i, j, x, t):
        return self.evaluator.kink(np.asarray(x) - np.asarray(t))

    def entry(self, i, j, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = np.empty(x.shape)
        flat_x, flat_y = x.ravel(), y.ravel()
        ev = self.evaluator
        vals = np.array([ev.block(i, j, np.array([a]), np.array([b]), smooth_only=True)[0, 0]
                         for a, b in zip(flat_x, flat_y)])
        if (i, j) == (1, 2):
            if ev.windowed:
                vals = vals + ev.kink(flat_x - flat_y)
            else:
                vals = vals + np.where(flat_x > flat_y, ev.branch_jump(flat_x, flat_y), 0.0)
        out.ravel()[:] = vals
        return out


def gbr_entry(params, i: int, j: int, xi: float, zeta: float, delta: float = DELTA,
              scale: int = 1, return_complex: bool = False, hatted: bool = False,
              truncation: float = TRUNCATION):
    """One entry of the generalized Baik-Rains kernel, following the definition literally.

    Paths come from build_left_contour / build_right_contour with vertex
    offset ``delta``; K12 uses the xi > zeta branch (right v outside, left w
    plus a loop around -y) or the xi <= zeta branch (left w outside, right v
    minus a loop around x). Tau is folded in as x - tau, y + tau. With
    ``hatted`` the stationary-limit integrand and its path constraints are used.
    """
    x, y = (np.asarray(v, dtype=float) for v in params.shifted())
    neg_y = tuple(-y)
    xs = tuple(x)
    ev = RationalFactors()
    ev.x, ev.y, ev.hatted = x, y, hatted

    def path(builder, left_of, right_of, loops=()):
        p0 = builder(left_of, right_of, delta)
        t = math.ceil(decay_truncation(p0.vertex, p0.side, min(xi, zeta), max(xi, zeta), start=truncation))
        near = clearance_of(p0.vertex, tuple(left_of) + tuple(right_of), loops)
        return ray_path(p0.vertex, p0.side, t, scale, near)

    def f_factor(w, v):
        return np.exp(v ** 3 / 3.0 - v * zeta - (w ** 3 / 3.0 - w * xi)) / (v - w)

    if (i, j) == (1, 1):
        if hatted:
            W = path(build_left_contour, neg_y, xs[1:])
            V = path(build_right_contour, (W.vertex,), xs[1:])
        else:
            W = path(build_left_contour, neg_y, ())
            V = path(build_right_contour, neg_y + (W.vertex,), ())
        val = integrate_double(W, V, lambda w, v: f_factor(w, v) * ev._ratio11(w, v))
    elif (i, j) == (2, 2):
        if hatted:
            V = path(build_right_contour, neg_y[1:], xs)
            W = path(build_left_contour, neg_y[1:], (V.vertex,))
        else:
            V = path(build_right_contour, (), xs)
            W = path(build_left_contour, (), xs + (V.vertex,))
        val = integrate_double(W, V, lambda w, v: f_factor(w, v) * ev._ratio22(w, v))
    elif (i, j) == (2, 1):
        if hatted:
            V = path(build_right_contour, neg_y[1:], xs[1:])
            W = path(build_left_contour, neg_y[1:], (V.vertex,))
        else:
            W = path(build_left_contour, (), (0.0,))
            V = path(build_right_contour, (W.vertex,), ())
        val = integrate_double(W, V, lambda w, v: f_factor(w, v) * ev._ratio21(w, v))
    elif (i, j) == (1, 2):
        poles = neg_y + xs

        def f12(w, v):
            return f_factor(w, v) * ev._ratio12(w, v)

        if xi > zeta:
            loops = fit_loops(pole_loops(neg_y), 0.5 * delta)
            far = min(lp.domain[1].real - (lp.domain[2] + 0.5 * delta) / SIN60 for lp in loops)
            V = path(build_right_contour, (), poles + (far + delta,), loops)
            W = path(build_left_contour, (), poles + (V.vertex,))
            _check_loops_clear(loops, V, "right")
            val = integrate_double(W, V, f12) + integrate_double(merge_rules(loops), V, f12)
        else:
            loops = fit_loops(pole_loops(xs), 0.5 * delta)
            far = max(lp.domain[1].real + (lp.domain[2] + 0.5 * delta) / SIN60 for lp in loops)
            W = path(build_left_contour, poles + (far - delta,), (), loops)
            V = path(build_right_contour, poles + (W.vertex,), ())
            _check_loops_clear(loops, W, "left")
            val = integrate_double(W, V, f12) - integrate_double(W, merge_rules(loops), f12)
    else:
        raise DomainError(f"entry index ({i}, {j}) out of range")
    val = val / TWO_PI_I ** 2
    return val if return_complex else val.real


def gbr2_entry(params, i: int, j: int, xi: float, zeta: float, **kw):
    """Entry of the stationary-limit kernel (h replaces the bare Airy factor)."""
    check_hat_pattern(params)
    return gbr_entry(params, i, j, xi, zeta, hatted=True, **kw)


def check_hat_pattern(params):
    """x_1 + y_1 = 0 and x_i + y_j > 0 for every other pair (tau cancels in the sums)."""
    x, y = np.asarray(params.x, dtype=float), np.asarray(params.y, dtype=float)
    sums = x[:, None] + y[None, :]
    if abs(sums[0, 0]) > 1e-12 * (1 + abs(x[0])):
        raise DomainError("stationary-limit kernel needs x_1 + y_1 = 0")
    off = np.ones(sums.shape, dtype=bool)
    off[0, 0] = False
    if np.any(sums[off] <= 0):
        raise DomainError("stationary-limit kernel needs x_i + y_j > 0 for (i, j) != (1, 1)")


def _check_loops_clear(loops, path: RayPath, side: str):
    """Raise if a residue circle touches a ray path."""
    sin60 = math.sin(math.pi / 3.0)
    for loop in loops:
        center, radius = loop.domain[1].real, loop.domain[2]
        gap = (path.vertex - center) if side == "left" else (center - path.vertex)
        if gap * sin60 <= radius:
            raise InfeasibleContourError(
                f"residue circle at {center:g} (radius {radius:g}) meets the {side} path at {path.vertex:g}"
            )


# ---------------------------------------------------------------------------
# Finite-N exponential kernels


def saddle_scaling(m: int, n: int):
    """(x0, w_c, c) for the finite-N integrand.

    With f(w) = m log(1/2 - w) - n log(1/2 + w) + w x0, the point w_c solves
    f' = f'' = 0 and c = (-f'''(w_c)/2)^(1/3); then w = w_c + W/c and
    x = x0 + c xi turn e^{f} into e^{-W^3/3 + xi W} to leading order.
    """
    a, b = math.sqrt(m), math.sqrt(n)
    x0 = (a + b) ** 2
    wc = (b - a) / (2.0 * (a + b))
    c = ((a + b) ** 4 / (a * b)) ** (1.0 / 3.0)
    return x0, wc, c


@dataclass
class FiniteLayout:
    """Apex of every loop (raw units), conjugation lines and residue circles.

    ``absorbed`` lists the alpha poles moved inside the K12 w-loop; their
    v-circles ``abs_loops`` join the K12 v-contour. ``lower_loops`` enclose
    the poles of the diagonal residue that sit left of line_a and
    ``upper_loops`` those right of line_b.
    """

    line_a: float
    line_b: float
    w11: float
    v11: float
    w22: float
    v22: float
    w21: float
    v21: float
    w12: float
    v12: float
    absorbed: tuple = ()
    abs_loops: list = field(default_factory=list)
    lower_loops: list = field(default_factory=list)
    upper_loops: list = field(default_factory=list)


def _clusters(points, gap):
    pts = sorted(float(p) for p in points)
    groups = []
    for p in pts:
        if groups and p - groups[-1][-1] < gap:
            groups[-1].append(p)
        else:
            groups.append([p])
    return groups


def finite_layout(alpha, beta, wc: float, c: float, hatted: bool = False, delta: float = DELTA) -> FiniteLayout:
    """Place the finite-N loops in scaled units W = (w - w_c) c, then map back.

    The w-apexes must exceed every enclosed w-pole (-1/2 and the relevant -beta)
    and the v-apexes stay below every v-pole (1/2 and the relevant alpha).
    Alpha poles too close to max(-beta) are absorbed into the K12 w-loop.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)

    def sc(z):
        return (z - wc) * c

    left_end, right_end = sc(-0.5), sc(0.5)
    lo = max(left_end, float(sc(np.max(-beta))))
    absorbed = []
    if hatted:
        hi = min([right_end] + [float(sc(a)) for a in alpha[1:]])
        if hi <= lo:
            raise InfeasibleContourError("stationary kernel needs alpha_i + beta_j > 0 off the corner")
        d = min(delta, (hi - lo) / 4.0)
        a1 = float(sc(alpha[0]))
        if a1 < lo + 2.0 * d:
            absorbed.append(float(alpha[0]))
            lo = max(lo, a1)
        else:
            hi = min(hi, a1)
    else:
        for a in np.sort(alpha):
            if sc(a) < lo + 2.0 * delta:
                absorbed.append(float(a))
                lo = max(lo, float(sc(a)))
        rest = [float(sc(a)) for a in alpha if float(a) not in absorbed]
        hi = min([right_end] + rest)
    d_a = min(delta, (hi - lo) / 4.0)
    if not d_a > 0:
        raise InfeasibleContourError("no room between the w-poles and v-poles")
    A = float(np.clip(0.0, lo + 2.0 * d_a, hi - 2.0 * d_a))
    a_w, a_v = A - d_a, A + d_a

    abs_loops_sc = []
    for group in _clusters([sc(a) for a in absorbed], 1.0):
        center = 0.5 * (group[0] + group[-1])
        half = 0.5 * (group[-1] - group[0])
        room = (a_w - group[-1]) * SIN60
        margin = min(0.25, 0.4 * room)
        if not margin > 0:
            raise InfeasibleContourError("absorbed pole too close to the w-loop")
        abs_loops_sc.append((center, half + margin, margin))
    abs_left = min((cen - r for cen, r, _ in abs_loops_sc), default=np.inf)

    hi_b = min([right_end] + [float(sc(a)) for a in alpha])
    lo_b = max([left_end] + ([float(sc(-b)) for b in beta[1:]] if hatted else []))
    d_b = min(delta, (hi_b - lo_b) / 4.0)
    B = float(np.clip(0.0, lo_b + 2.0 * d_b, hi_b - 2.0 * d_b))
    B = min(B, A, abs_left - d_b)
    d_b = min(d_b, (B - lo_b) / 2.0, (hi_b - B) / 2.0)
    if not d_b > 0:
        raise InfeasibleContourError("no room for the second conjugation line")

    # residue circles of the diagonal term, split at the gap between lo and hi
    if hatted:
        low_pts = [-beta[0]] + ([alpha[0]] if absorbed else [])
        up_pts = [] if absorbed else [alpha[0]]
    else:
        low_pts = list(-beta) + absorbed
        up_pts = [float(a) for a in alpha if float(a) not in absorbed]
    res_margin = min(0.25, 0.5 * (A - lo), 0.3 * (hi - lo))

    def res_loops(points, margin):
        out = []
        for group in _clusters([sc(p) for p in points], 1.0):
            center = 0.5 * (group[0] + group[-1])
            radius = 0.5 * (group[-1] - group[0]) + margin
            out.append(circle_rule(wc + center / c, radius / c, loop_nodes(radius, margin)))
        return out

    def raw(z):
        return wc + z / c

    return FiniteLayout(
        line_a=raw(A),
        line_b=raw(B),
        w11=raw(a_w),
        v11=raw(a_v),
        w22=raw(B - d_b),
        v22=raw(B + d_b),
        w21=raw(B - d_b),
        v21=raw(a_v),
        w12=raw(a_w),
        v12=raw(a_v),
        absorbed=tuple(absorbed),
        abs_loops=[circle_rule(raw(cen), r / c, loop_nodes(r, mg)) for cen, r, mg in abs_loops_sc],
        lower_loops=res_loops(low_pts, res_margin),
        upper_loops=res_loops(up_pts, min(0.25, 0.5 * (hi - B))),
    )


def _gl_panels(edges, z_of, dz_of, per_panel: int) -> QuadRule:
    base = gauss_legendre(per_panel)
    edges = np.asarray(edges, dtype=float)
    half = 0.5 * np.diff(edges)
    t = (edges[:-1, None] + half[:, None] * (base.nodes[None, :] + 1.0)).ravel()
    dt = (half[:, None] * base.weights[None, :]).ravel()
    return QuadRule(z_of(t), dz_of(t) * dt, ("path",))


def _adaptive_edges(t0: float, t1: float, rate, budget: float, max_len: float):
    """Panel edges so that int rate dt <= budget and each panel is at most max_len long."""
    tt = np.linspace(t0, t1, 2001)
    r = rate(tt)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (r[1:] + r[:-1]) * np.diff(tt))])
    k = max(1, int(math.ceil(cum[-1] / budget)))
    edges = np.interp(np.linspace(0.0, cum[-1], k + 1), cum, tt) if cum[-1] > 0 else np.array([t0, t1])
    out = [edges[0]]
    for a, b in zip(edges[:-1], edges[1:]):
        pieces = max(1, int(math.ceil((b - a) / max_len)))
        out.extend(a + (b - a) * np.arange(1, pieces + 1) / pieces)
    return np.asarray(out)


class WedgeLoop:
    """Counterclockwise loop around ``center`` (= -1/2 or +1/2) through a real apex.

    The loop leaves the apex along the Airy directions (2pi/3 for a w-loop,
    pi/3 for a v-loop) and closes with an arc of the circle |z - center| = rho.
    The arc is dropped when the integrand there is below 1e-18 of its peak.
    Among radii that enclose every required pole, the one with the cheapest
    quadrature is used. ``logmag(z, arg)`` is log|integrand| up to a constant
    and ``slope(z, arg)`` its complex log-derivative; ``slope.scale`` gives the
    natural length scale (the saddle scaling c).
    """

    def __init__(self, apex: float, side: str, enclose=(), circles=(), avoid=(), logmag=None, slope=None,
                 args=(0.0,), scale: float = 1.0, per_panel: int = RAY_PER_PANEL, budget: float = 2.5):
        self.apex = float(apex)
        self.side = side
        self.center = -0.5 if side == "left" else 0.5
        self.theta = LEFT_ANGLE if side == "left" else RIGHT_ANGLE
        self.args = np.atleast_1d(np.asarray(args, dtype=float))
        self.slope = slope
        self.scale = scale
        self.budget = budget
        self.per_panel = per_panel
        self.avoid = np.asarray(list(avoid), dtype=complex)
        self.circles = list(circles)
        c = getattr(slope, "scale", 1.0)
        self.max_len = 1.0 / (c * scale)
        q = self.apex - self.center
        reach = [abs(p - self.center) + 0.25 * abs(q) for p in enclose]
        reach += [abs(cen - self.center) + r + 0.25 * abs(q) for cen, r in circles]
        rho_min = max([1.05 * abs(q)] + reach)
        up = np.exp(1j * self.theta)

        # the loop is closed, but stretches below 1e-18 of the peak are skipped
        radii = [rho_min * f for f in (1.0, 1.25, 1.6, 2.0, 3.0)]
        best = None
        for rho in radii:
            length = self._ray_length(q, rho)
            phi = float(np.angle(q + length * up))
            arc = (phi, 2.0 * math.pi - phi) if side == "left" else (-phi, phi)
            tt = np.linspace(0.0, length, 1500)
            ray_z = self.apex + tt * up
            arc_z = self.center + rho * np.exp(1j * np.linspace(arc[0], arc[1], 800))
            keep, cut = False, 0.0
            for arg in self.args:
                ray_lm = logmag(ray_z, arg)
                arc_lm = logmag(arc_z, arg)
                peak = max(ray_lm.max(), arc_lm.max())
                if arc_lm.max() > ray_lm.max() + 7.0:
                    keep = None  # arc dominates: cancellation risk, skip this radius
                    break
                keep = keep or arc_lm.max() > peak - DROP
                live = np.nonzero(ray_lm > peak - DROP)[0]
                cut = max(cut, tt[min(live.max() + 1, tt.size - 1)] if live.size else 0.0)
            if keep is None:
                continue
            if keep:
                cut = length
            cost = 2.0 * self._cost(*self._ray_maps(up, cut, False), 0.0, cut, self.max_len)
            if keep:
                cost += self._cost(*self._arc_maps(rho), arc[0], arc[1], self.max_len / rho)
            if best is None or cost < best[0]:
                best = (cost, rho, cut, arc, keep)
        if best is None:
            raise InfeasibleContourError("no loop radius keeps the integrand under control")
        _, self.rho, self.length, self.arc, self.keep_arc = best
        self.rule = self._build()

    def _ray_length(self, q, rho):
        """Positive root t of |q + t e^{i theta}| = rho."""
        cos = math.cos(self.theta)
        return -q * cos + math.sqrt(max(rho * rho - q * q * (1.0 - cos * cos), 0.0))

    def _dist(self, z):
        d = np.full(z.shape, np.inf)
        if self.avoid.size:
            d = np.min(np.abs(z[:, None] - self.avoid[None, :]), axis=1)
        for cen, r in self.circles:
            d = np.minimum(d, np.abs(np.abs(z - cen) - r))
        return np.maximum(d, 1e-12)

    def _rate(self, z_of, dz_of):
        def rate(t):
            z, dz = z_of(t), np.abs(dz_of(t))
            best = np.zeros(z.shape)
            for arg in self.args:
                s = self.slope(z, arg)
                best = np.maximum(best, np.abs(s.imag) + 0.5 * np.abs(s.real))
            return self.scale * dz * (best + 3.0 / self._dist(z))
        return rate

    def _cost(self, z_of, dz_of, t0, t1, max_len):
        t = np.linspace(t0, t1, 400)
        r = self._rate(z_of, dz_of)(t)
        return float(np.sum(0.5 * (r[1:] + r[:-1]) * np.diff(t))) / self.budget + abs(t1 - t0) / max_len

    def _ray_maps(self, direction, length, inward):
        if inward:
            return (lambda t: self.apex + (length - t) * direction), (lambda t: -direction * np.ones_like(t))
        return (lambda t: self.apex + t * direction), (lambda t: direction * np.ones_like(t))

    def _arc_maps(self, rho):
        return (lambda t: self.center + rho * np.exp(1j * t)), (lambda t: 1j * rho * np.exp(1j * t))

    def _piece(self, z_of, dz_of, t0, t1, max_len):
        edges = _adaptive_edges(t0, t1, self._rate(z_of, dz_of), self.budget, max_len)
        return _gl_panels(edges, z_of, dz_of, self.per_panel)

    def _build(self):
        up = np.exp(1j * self.theta)
        down = np.conj(up)
        T = self.length
        lower = self._piece(*self._ray_maps(down, T, self.side == "left"), 0.0, T, self.max_len)
        upper = self._piece(*self._ray_maps(up, T, self.side == "right"), 0.0, T, self.max_len)
        arc = [self._piece(*self._arc_maps(self.rho), self.arc[0], self.arc[1], self.max_len / self.rho)] \
            if self.keep_arc else []
        pieces = [lower, upper] + arc if self.side == "left" else [lower] + arc + [upper]
        return merge_rules(pieces)


class _FiniteExponent:
    """log of the w-side factor of E relative to the double critical point."""

    def __init__(self, m, n):
        self.m, self.n = m, n
        self.x0, self.wc, self.scale = saddle_scaling(m, n)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        u = z - self.wc
        return (self.m * np.log1p(-u / (0.5 - self.wc)) - self.n * np.log1p(u / (0.5 + self.wc))
                + u * self.x0)

    def derivative(self, z, arg):
        return -self.m / (0.5 - z) - self.n / (0.5 + z) + arg


class FiniteNEvaluator(RationalFactors):
    """Separable evaluation of the finite-N kernel entries (thick or stationary).

    E(x, w; y, v) is split as a(x, w) b(y, v) with both halves measured from
    the double critical point, so values stay in range for large m, n.
    ``args`` bounds the arguments the kernel will be evaluated at; it decides
    how far the loops must reach.
    """

    def __init__(self, m: int, n: int, alpha, beta, hatted: bool = False, args=(0.0, 1.0),
                 delta: float = DELTA, panels_scale: float = 1.0):
        self.m, self.n = int(m), int(n)
        self.x = np.asarray(alpha, dtype=float)
        self.y = np.asarray(beta, dtype=float)
        self.hatted = hatted
        self.phase = _FiniteExponent(self.m, self.n)
        self.x0, self.wc, self.c = self.phase.x0, self.phase.wc, self.phase.scale
        self.layout = finite_layout(self.x, self.y, self.wc, self.c, hatted, delta)
        self.args = np.linspace(min(args), max(args), 5)
        self.panels_scale = panels_scale
        self._loops = {}
        self._cores = {}

    # loop construction ---------------------------------------------------------
    def _w_poles(self, block):
        if self.hatted and block in ((2, 2), (2, 1)):
            return [-0.5] + list(-self.y[1:])
        if block in ((1, 1), (1, 2)):
            return [-0.5] + list(-self.y)
        return [-0.5]

    def _v_poles(self, block):
        if block == (1, 2):
            return [0.5] + [a for a in self.x if float(a) not in self.layout.absorbed]
        if block == (2, 2):
            return [0.5] + list(self.x)
        if self.hatted:
            return [0.5] + list(self.x[1:])
        return [0.5]

    def _apexes(self, block):
        L = self.layout
        return {(1, 1): (L.w11, L.v11), (2, 2): (L.w22, L.v22),
                (2, 1): (L.w21, L.v21), (1, 2): (L.w12, L.v12)}[block]

    def loops(self, block):
        if block in self._loops:
            return self._loops[block]
        wa, va = self._apexes(block)
        phase = self.phase
        x0 = self.x0
        everything = [-0.5, 0.5] + list(-self.y) + list(self.x)
        circles = [(lp.domain[1].real, lp.domain[2]) for lp in self.layout.abs_loops] if block == (1, 2) else []

        def w_logmag(z, arg):
            return (phase(z) + z * (arg - x0)).real

        def v_logmag(z, arg):
            return -(phase(z) + z * (arg - x0)).real

        def w_slope(z, arg):
            return phase.derivative(z, arg)

        def v_slope(z, arg):
            return -phase.derivative(z, arg)

        w_slope.scale = v_slope.scale = self.c
        W = WedgeLoop(wa, "left", self._w_poles(block), circles, everything + [va], w_logmag, w_slope,
                      self.args, self.panels_scale)
        V = WedgeLoop(va, "right", self._v_poles(block), (), everything + [wa], v_logmag, v_slope,
                      self.args, self.panels_scale)
        self._loops[block] = (W, V)
        return W, V

    def _a(self, rule, xs):
        z = rule.nodes[None, :]
        return rule.weights[None, :] * np.exp(self.phase(z) + z * (np.asarray(xs)[:, None] - self.x0)) / TWO_PI_I

    def _b(self, rule, ys):
        z = rule.nodes[None, :]
        return rule.weights[None, :] * np.exp(-self.phase(z) - z * (np.asarray(ys)[:, None] - self.x0)) / TWO_PI_I

    def block(self, i, j, xs, ys):
        """Smooth part of K_ij on the grid xs x ys (for K12 the disjoint-contour term)."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        Wr, Vr, G = self._core((i, j))
        return -(self._a(Wr, xs) @ G @ self._b(Vr, ys).T).real

    def _core(self, block):
        if block not in self._cores:
            W, V = self.loops(block)
            Wr, Vr = W.rule, V.rule
            if block == (1, 2) and self.layout.abs_loops:
                Vr = merge_rules([Vr] + self._abs_rules())
            ratio = {(1, 1): self._ratio11, (2, 2): self._ratio22,
                     (2, 1): self._ratio21, (1, 2): self._ratio12}[block]
            G = ratio(Wr.nodes[:, None], Vr.nodes[None, :]) / (Vr.nodes[None, :] - Wr.nodes[:, None])
            self._cores[block] = (Wr, Vr, G)
        return self._cores[block]

    def _abs_rules(self):
        if self.panels_scale == 1:
            return list(self.layout.abs_loops)
        return [circle_rule(r.domain[1], r.domain[2], int(len(r) * self.panels_scale)) for r in self.layout.abs_loops]

    def _residue_sum(self, loops, u):
        if not loops:
            return np.zeros(np.shape(u))
        C = merge_rules(loops)
        coef = C.weights * self._ratio12(C.nodes, C.nodes) / TWO_PI_I
        u = np.asarray(u, dtype=float)
        return (np.exp(u[..., None] * C.nodes) @ coef).real

    def lower_jump(self, u):
        """Added to K12 where x > y: minus the residues of the diagonal term left of line_a."""
        return -self._residue_sum(self.layout.lower_loops, u)

    def upper_jump(self, u):
        """Added to K12 where x <= y: the residues right of line_b."""
        return self._residue_sum(self.layout.upper_loops, u)

    def entry(self, i, j, x, y):
        val = self.block(i, j, np.array([x]), np.array([y]))[0, 0]
        if (i, j) == (1, 2):
            val += self.lower_jump(x - y) if x > y else self.upper_jump(x - y)
        return float(val)


class FiniteNKernel(MatrixKernel2x2):
    """Finite-N kernel with K12 split into a smooth part and two Volterra pieces."""

    volterra_blocks = ((1, 2),)

    def __init__(self, evaluator: FiniteNEvaluator, origin: float, span: float):
        self.evaluator = evaluator
        self.origin = origin
        self.span = span
        self.kinked = False
        self.volterra_upper_blocks = ((1, 2),) if evaluator.layout.upper_loops else ()
        a = evaluator.layout.line_a
        b = evaluator.layout.line_b
        self.conjugation = (lambda t: np.exp(-a * (t - origin)), lambda t: np.exp(-b * (t - origin)))

    def blocks(self, x):
        return {(i, j): self.evaluator.block(i, j, x, x) for i in (1, 2) for j in (1, 2)}

    def volterra(self, i, j, x, t):
        return self.evaluator.lower_jump(x - t)

    def volterra_upper(self, i, j, x, t):
        return self.evaluator.upper_jump(x - t)

    def entry(self, i, j, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        vals = np.array([self.evaluator.entry(i, j, a, b) for a, b in zip(x.ravel(), y.ravel())])
        return vals.reshape(x.shape)


# ---------------------------------------------------------------------------
# Literal circle contours (small arguments; used as an independent check)


def _cluster_circle(points, clear, radius_scale=1.0):
    lo, hi = min(points), max(points)
    return 0.5 * (lo + hi), (0.5 * (hi - lo) + clear) * radius_scale


def _trapezoid(center, radius, n):
    return circle_rule(center, radius, int(8 * math.ceil(n / 8)))


def _check_finite_domain(params, hatted):
    a = np.asarray(params.alpha, dtype=float)
    b = np.asarray(params.beta, dtype=float)
    if hatted:
        if np.any(a[:, None] + b[None, :] < 0):
            raise DomainError("stationary kernel needs alpha_i + beta_j >= 0")
    elif np.any(a <= -0.5) or np.any(b <= -0.5):
        raise DomainError("finite-N kernel needs every alpha, beta > -1/2")
    return a, b


def _literal_exponential(params, i, j, x, y, hatted, radius_scale=1.0, nodes_scale=1.0,
                         return_complex=False, clear=0.3, ring=0.7):
    alpha, beta = _check_finite_domain(params, hatted)
    m, n = params.m, params.n
    ev = RationalFactors()
    ev.x, ev.y, ev.hatted = alpha, beta, hatted
    probe = FiniteNEvaluator.__new__(FiniteNEvaluator)
    probe.x, probe.y, probe.hatted = alpha, beta, hatted
    probe.layout = FiniteLayout(0, 0, 0, 0, 0, 0, 0, 0, 0, 0, absorbed=())
    block = (i, j)
    if block not in ((1, 1), (1, 2), (2, 1), (2, 2)):
        raise DomainError(f"entry index ({i}, {j}) out of range")
    w_pts = probe._w_poles(block)
    v_pts = probe._v_poles(block)
    ratio = {(1, 1): ev._ratio11, (2, 2): ev._ratio22, (2, 1): ev._ratio21, (1, 2): ev._ratio12}[block]

    def make(center, radius, inside, partner):
        # partner = (center, radius) of the other circle; margins measured after any scaling
        inner = radius - max(abs(p - center) for p in inside)
        dist = abs(partner[0] - center)
        outer = abs(dist - radius - partner[1]) if dist > radius + partner[1] else abs(abs(dist - partner[1]) - radius)
        margin = min(inner, outer)
        if margin <= 0:
            raise InfeasibleContourError("circle contours touch a pole or each other")
        extra = 3.0 * (abs(x) + abs(y)) * radius + 2 * (m + n)
        return _trapezoid(center, radius, nodes_scale * (loop_nodes(radius, margin) + extra))

    def integrand(w, v):
        logE = (m * (np.log(0.5 - w) - np.log(0.5 - v)) + n * (np.log(0.5 + v) - np.log(0.5 + w))
                + w * x - v * y)
        return np.exp(logE) * ratio(w, v) / (v - w)

    if block == (1, 2):
        if x > y:
            cw, rw = _cluster_circle(w_pts, clear, radius_scale)
            rv = max(rw + ring, max(abs(p - cw) for p in v_pts) + clear)
            W = make(cw, rw, w_pts, (cw, rv))
            V = make(cw, rv, v_pts, (cw, rw))
        else:
            cv, rv = _cluster_circle(v_pts, clear, radius_scale)
            rw = max(rv + ring, max(abs(p - cv) for p in w_pts) + clear)
            V = make(cv, rv, v_pts, (cv, rw))
            W = make(cv, rw, w_pts, (cv, rv))
    else:
        gap = min(v_pts) - max(w_pts)
        if gap <= 0:
            raise InfeasibleContourError("w-poles and v-poles overlap")
        cl = min(clear, gap / 3.0)
        cw, rw = _cluster_circle(w_pts, cl, radius_scale)
        cv, rv = _cluster_circle(v_pts, cl, radius_scale)
        if cw + rw >= cv - rv:
            raise InfeasibleContourError("scaled circles intersect")
        W = make(cw, rw, w_pts, (cv, rv))
        V = make(cv, rv, v_pts, (cw, rw))
    val = -integrate_double(W, V, integrand) / TWO_PI_I ** 2
    return val if return_complex else val.real


def finite_n_entry(params, i: int, j: int, x: float, y: float, **kw):
    """Entry (i, j) of the thick-boundary finite-N kernel by plain circle contours.

    K12 follows both indicator branches with nested circles (the v-circle
    surrounds the w-circle when x > y, the reverse otherwise). Accurate while
    |x|, |y| stay moderate; large arguments go through FiniteNEvaluator.
    """
    return _literal_exponential(params, i, j, float(x), float(y), hatted=False, **kw)


def stationary_entry(params, i: int, j: int, x: float, y: float, **kw):
    """As finite_n_entry with the stationary prefactors (first alpha/beta split off)."""
    return _literal_exponential(params, i, j, float(x), float(y), hatted=True, **kw)


def zero_residue_integral(x: float, y: float, n: int = LOOP_NODES) -> complex:
    """(1/2 pi i) times the loop integral of e^{v(x - y)} around 1/2; vanishes identically."""
    return integrate_single(circle_rule(0.5, 0.25, n), lambda v: np.exp(v * (x - y))) / TWO_PI_I


# ---------------------------------------------------------------------------
# Geometric model


class GeometricEvaluator:
    """Kernel of the geometric model on circles around its pole clusters.

    w-circles surround sqrt(q) (and b for the first block row), v-circles
    surround 1/sqrt(q) (and 1/a for the second block column). Both keep
    clear of 0 and of each other.
    """

    def __init__(self, q: float, a, b, m: int, n: int, radius_scale: float = 1.0, nodes_scale: float = 1.0,
                 clear: float = 0.3):
        self.q = float(q)
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.m, self.n = int(m), int(n)
        if not 0.0 < self.q < 1.0:
            raise DomainError("geometric model needs 0 < q < 1")
        r = math.sqrt(self.q)
        if np.any(r * self.a <= 0) or np.any(r * self.a >= 1) or np.any(r * self.b <= 0) or np.any(r * self.b >= 1):
            raise DomainError("geometric model needs 0 < sqrt(q) a_i, sqrt(q) b_j < 1")
        self.root = r
        w_all = [r] + list(self.b)
        v_all = [1.0 / r] + list(1.0 / self.a)
        gap = min(v_all) - max(w_all)
        if gap <= 0:
            raise InfeasibleContourError("geometric kernel needs max(sqrt q, b) < min(1/sqrt q, 1/a)")
        self.gap = gap
        self.clear = clear
        self.radius_scale = radius_scale
        self.nodes_scale = nodes_scale

    def _w_points(self, block):
        return [self.root] + (list(self.b) if block[0] == 1 else [])

    def _v_points(self, block):
        return [1.0 / self.root] + (list(1.0 / self.a) if block[1] == 2 else [])

    def _circle(self, points, avoid_zero=True):
        cl = min(self.clear, self.gap / 3.0)
        if avoid_zero:
            cl = min(cl, 0.5 * min(points))
        return _cluster_circle(points, cl, self.radius_scale), cl

    def _count(self, center, radius, margin, power):
        # the monomial factor z^power needs about e |power| r / |center| extra nodes
        extra = math.e * abs(power) * radius / max(abs(center) - radius, 1e-3 * radius)
        n = loop_nodes(radius, margin) + min(extra, 4096) + 2 * (self.m + self.n)
        return int(self.nodes_scale * n)

    def loops(self, block, xmax):
        (cw, rw), mw = self._circle(self._w_points(block))
        (cv, rv), mv = self._circle(self._v_points(block))
        if cw + rw >= cv - rv:
            raise InfeasibleContourError("geometric circles intersect")
        W = _trapezoid(cw, rw, self._count(cw, rw, mw, xmax))
        V = _trapezoid(cv, rv, self._count(cv, rv, mv, xmax))
        return W, V

    def _ratio(self, block, w, v):
        a, b = self.a, self.b
        if block == (1, 1):
            return np.prod([(1 - bj / v) / (1 - bj / w) for bj in b], axis=0)
        if block == (2, 2):
            return np.prod([(1 - ai * w) / (1 - ai * v) for ai in a], axis=0)
        if block == (2, 1):
            return np.prod([1 - ai * w for ai in a], axis=0) * np.prod([1 - bj / v for bj in b], axis=0)
        return 1.0 / (np.prod([1 - ai * v for ai in a], axis=0) * np.prod([1 - bj / w for bj in b], axis=0))

    def block(self, i, j, xs, ys, return_complex: bool = False):
        """Contour part of K_ij on the integer grid xs x ys (no residue term)."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        W, V = self.loops((i, j), max(np.abs(xs).max(), np.abs(ys).max()) + 1)
        r, m, n = self.root, self.m, self.n
        w, v = W.nodes, V.nodes
        lw = m * np.log(1 - r * w) - n * np.log(1 - r / w)
        lv = -m * np.log(1 - r * v) + n * np.log(1 - r / v)
        aw = W.weights[None, :] * np.exp(lw[None, :] + (xs[:, None] - 1) * np.log(w)[None, :]) / TWO_PI_I
        bv = V.weights[None, :] * np.exp(lv[None, :] - ys[:, None] * np.log(v)[None, :]) / TWO_PI_I
        G = self._ratio((i, j), w[:, None], v[None, :]) / (v[None, :] - w[:, None])
        val = -(aw @ G @ bv.T)
        return val if return_complex else val.real

    def _rest(self, z):
        return 1.0 / (np.prod([1 - ai * z for ai in self.a], axis=0) * np.prod([1 - bj / z for bj in self.b], axis=0))

    def residue_term(self, x, y):
        """R12(x, y): minus the residues at b when x > y, the residues at 1/a otherwise.

        Both come from moving the v = w pole when the nested loops are pulled
        apart; the loop around 0 is part of the x <= y term only through
        -(Res_0 + Res_b), which equals the residues at 1/a.
        """
        d = int(x) - int(y) - 1
        return float(self.residue_row(np.array([d]))[0])

    def residue_row(self, d):
        """R12 as a function of d = x - y - 1 (vectorized)."""
        d = np.asarray(d, dtype=float)
        low = d >= 0
        out = np.empty(d.shape)
        out[low] = -self.pole_sum(self.b, d[low], "b")
        out[~low] = self.pole_sum(1.0 / self.a, d[~low], "a")
        return out

    def pole_sum(self, points, d, kind):
        """Sum of residues of z^d / (prod(1 - a z) prod(1 - b/z)) at the given poles.

        Isolated poles use the closed form; pole clusters get a circle whose
        radius is kept small so large powers do not cancel.
        """
        d = np.asarray(d, dtype=float)
        out = np.zeros(d.shape)
        if not d.size:
            return out
        k = len(self.b)
        points = list(points)
        for group in _clusters(points, 1e-3):
            if len(group) == 1:
                p = group[0]
                idx = points.index(p)
                if kind == "b":
                    denom = np.prod([1 - ai * p for ai in self.a]) * np.prod(np.delete(p - self.b, idx))
                else:
                    denom = -self.a[idx] * np.prod(np.delete(1 - self.a * p, idx)) * np.prod(p - self.b)
                out += np.exp((d + k) * math.log(p)) / denom
            else:
                cl = min(self.clear, self.gap / 3.0, 0.5 * min(group))
                c0, r0 = _cluster_circle(group, cl, self.radius_scale)
                C = _trapezoid(c0, r0, self._count(c0, r0, cl, np.max(np.abs(d))))
                vals = np.exp(d[:, None] * np.log(C.nodes)[None, :]) * (C.weights * self._rest(C.nodes))[None, :]
                out += (vals.sum(axis=1) / TWO_PI_I).real
        return out

    def residue_loops(self, x, y):
        """R12 by literal loops: around b for x > y, minus the loops around 0 and b otherwise.

        Only meant for small |x - y|, where the loop around 0 is well conditioned.
        """
        d = int(x) - int(y) - 1
        cl = min(self.clear, self.gap / 3.0, 0.5 * min(self.b))
        cb, rb = _cluster_circle(list(self.b), cl, self.radius_scale)
        Cb = _trapezoid(cb, rb, self._count(cb, rb, cl, d))

        def f(z):
            return np.exp(d * np.log(z)) * self._rest(z)
        total = integrate_single(Cb, f)
        if x <= y:
            r0 = 0.5 * min(self.b)
            total += integrate_single(_trapezoid(0.0, r0, loop_nodes(r0, r0) + 2 * abs(d)), f)
        return (-total / TWO_PI_I).real

    def entry(self, i, j, x, y, return_complex: bool = False):
        val = self.block(i, j, np.array([x]), np.array([y]), return_complex=True)[0, 0]
        if (i, j) == (1, 2):
            val += self.residue_term(x, y)
        return complex(val) if return_complex else float(val.real)


def geo_entry(q: float, a, b, m: int, n: int, i: int, j: int, x: int, y: int,
              return_complex: bool = False, **kw):
    """Entry (i, j) of the geometric-model kernel at integer points, residue term included."""
    if int(x) != x or int(y) != y:
        raise DomainError("geometric kernel lives on integers")
    return GeometricEvaluator(q, a, b, m, n, **kw).entry(i, j, int(x), int(y), return_complex)
