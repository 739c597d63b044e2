"""Monte Carlo for last passage percolation with thick boundaries.

Lattices are stored as arrays ``w[c, r]`` with the ``ell`` boundary columns
first and the ``kay`` boundary rows first, so ``c = i + ell - 1`` and
``r = j + kay - 1`` in the (i, j) labels running from (-ell+1, -kay+1) to
(m, n). The geometric model uses the same layout: after reversing both axes
its boundary columns and rows sit next to the origin as well.

Every sample owns a Philox stream keyed by (seed, sample index), so batches
can run in any order and still give bit-identical results.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .distributions import FiniteNParams, ScalingMap, scale_to_limit
from .errors import DomainError

DKW_CONFIDENCE = 0.01
BATCH_CELLS = 1 << 22  # cells per batch in the vectorized DP


@dataclass(frozen=True)
class LatticeConfig:
    """Lattice size, boundary parameters, weight model and seed."""

    m: int
    n: int
    ell: int
    kay: int
    alpha: tuple
    beta: tuple
    model: str = "thick"
    seed: int = 0
    q: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(v) for v in np.atleast_1d(self.alpha)))
        object.__setattr__(self, "beta", tuple(float(v) for v in np.atleast_1d(self.beta)))
        if len(self.alpha) != self.ell or len(self.beta) != self.kay:
            raise DomainError(f"alpha needs {self.ell} entries and beta needs {self.kay}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("seed must fit in 64 bits")
        self.params  # validates the parameter domain
        if self.model == "stationary":
            a, b = np.array(self.alpha), np.array(self.beta)
            rates = a[:, None] + b[None, :]
            rates[0, 0] = 1.0
            if np.any(rates <= 0):
                raise DomainError("stationary model needs alpha_i + beta_j > 0 off the corner point")

    @property
    def params(self):
        return FiniteNParams(self.m, self.n, self.alpha, self.beta, self.model, self.q)

    @property
    def shape(self):
        return (self.ell + self.m, self.kay + self.n)

    def with_size(self, m, n):
        return LatticeConfig(m, n, self.ell, self.kay, self.alpha, self.beta, self.model, self.seed, self.q)


@dataclass
class LppRun:
    """Last passage value, exit point and (optionally) the geodesic in (i, j) labels."""

    L: float
    exit: int
    geodesic: list | None = None


@dataclass
class EcdfReport:
    sample_count: int
    grid: np.ndarray
    values: np.ndarray
    dkw_radius: float
    samples: np.ndarray = field(repr=False)

    def at(self, s):
        """Empirical CDF at s (right-continuous)."""
        return np.searchsorted(self.samples, s, side="right") / self.sample_count

    def sup_distance(self, cdf, points):
        """max |ECDF - F| over the given points, checking both one-sided limits of the ECDF."""
        pts = np.asarray(points, dtype=float)
        F = np.array([float(cdf(s)) for s in pts])
        right = self.at(pts)
        left = np.searchsorted(self.samples, pts, side="left") / self.sample_count
        return float(np.max(np.maximum(np.abs(right - F), np.abs(left - F))))


def dkw_radius(count: int, confidence: float = DKW_CONFIDENCE) -> float:
    return math.sqrt(math.log(2.0 / confidence) / (2.0 * count))


# ---------------------------------------------------------------------------
# weights


def _rates(cfg: LatticeConfig):
    """Per-site exponential rates (or geometric parameters); 0 marks a zero weight."""
    C, R = cfg.shape
    ell, kay = cfg.ell, cfg.kay
    out = np.ones((C, R))
    a, b = np.array(cfg.alpha), np.array(cfg.beta)
    if cfg.model == "geometric":
        root = math.sqrt(cfg.q)
        out[:] = cfg.q
        out[:ell, :] = (root * a)[:, None]
        out[:, :kay] = (root * b)[None, :]
        out[:ell, :kay] = 0.0
        return out
    out[:ell, :] = (0.5 + a)[:, None]
    out[:, :kay] = (0.5 + b)[None, :]
    if cfg.model == "stationary":
        out[:ell, :kay] = a[:, None] + b[None, :]
        out[0, 0] = 0.0
    else:
        out[:ell, :kay] = 0.0
    return out


def sample_stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one sample."""
    return np.random.Generator(np.random.Philox(key=int(seed) | (int(index) << 64)))


def _scale(rates, model):
    """Factor turning log(1 - U) into the weight: -1/rate, or 1/log(gamma) before the floor."""
    live = rates > 0
    safe = np.where(live, rates, 0.5)
    return np.where(live, 1.0 / np.log(safe) if model == "geometric" else -1.0 / safe, 0.0)


def _draw(rates, model, u):
    """Inverse-CDF weights from uniforms, in place."""
    np.negative(u, out=u)
    np.log1p(u, out=u)
    u *= _scale(rates, model)
    if model == "geometric":
        np.floor(u, out=u)
    return u


def gen_weights(cfg: LatticeConfig, index: int = 0) -> np.ndarray:
    """One weight array w[c, r] for sample ``index`` of the configured stream."""
    rates = _rates(cfg).T
    u = sample_stream(cfg.seed, index).random(rates.shape)
    return _draw(rates, cfg.model, u).T


def gen_weight_batch(cfg: LatticeConfig, start: int, count: int) -> np.ndarray:
    """Weights for samples start, ..., start + count - 1 as w[b, c, r] (rows contiguous in memory)."""
    rates = _rates(cfg).T
    u = np.empty((count,) + rates.shape)
    for t in range(count):
        sample_stream(cfg.seed, start + t).random(out=u[t])
    return _draw(rates, cfg.model, u).transpose(0, 2, 1)


# ---------------------------------------------------------------------------
# last passage


def last_passage(weights) -> float:
    """max over up-right paths from w[0, 0] to w[-1, -1] of the summed weights (rolling row)."""
    w = np.asarray(weights, dtype=float)
    C, R = w.shape
    row = np.full(C, -np.inf)
    row[0] = 0.0
    for r in range(R):
        left = -np.inf
        for c in range(C):
            left = w[c, r] + max(left, row[c])
            row[c] = left
    return float(row[-1])


def _pick_left(left, down, lab_left, lab_down):
    """Predecessor choice: larger value; on ties the row side, then the horizontal step."""
    tie = left == down
    prefer_down = tie & (lab_down > 0) & (lab_left < 0)
    return (left > down) | (tie & ~prefer_down)


def _table(w, ell, kay):
    """Full L table and exit labels for one lattice."""
    C, R = w.shape
    L = np.zeros((C, R))
    lab = np.zeros((C, R), dtype=np.int64)
    for r in range(R):
        for c in range(C):
            left = L[c - 1, r] if c else -np.inf
            down = L[c, r - 1] if r else -np.inf
            if c == 0 and r == 0:
                left = 0.0
            L[c, r] = w[c, r] + max(left, down)
            if c >= ell and r >= kay:
                ll = lab[c - 1, r] if c > ell else -(r - kay + 1)
                ld = lab[c, r - 1] if r > kay else c - ell + 1
                lab[c, r] = ll if _pick_left(left, down, ll, ld) else ld
    return L, lab


def last_passage_with_geodesic(weights, ell: int = 1, kay: int = 1) -> LppRun:
    """L, exit point and geodesic (corner to far corner) in (i, j) labels.

    The exit point is +i when the geodesic leaves the boundary rows at (i, 0)
    and -j when it leaves the boundary columns at (0, j). Ties go to the row
    side, then to the horizontal predecessor.
    """
    w = np.asarray(weights, dtype=float)
    C, R = w.shape
    if C <= ell or R <= kay:
        raise DomainError("lattice has no bulk cell")
    L, lab = _table(w, ell, kay)
    c, r = C - 1, R - 1
    path = [(c, r)]
    while (c, r) != (0, 0):
        if c == 0:
            r -= 1
        elif r == 0:
            c -= 1
        else:
            if c >= ell and r >= kay:
                ll = lab[c - 1, r] if c > ell else -(r - kay + 1)
                ld = lab[c, r - 1] if r > kay else c - ell + 1
            else:
                ll = ld = 0
            if _pick_left(L[c - 1, r], L[c, r - 1], ll, ld):
                c -= 1
            else:
                r -= 1
        path.append((c, r))
    path.reverse()
    geodesic = [(cc - ell + 1, rr - kay + 1) for cc, rr in path]
    return LppRun(float(L[-1, -1]), int(lab[-1, -1]), geodesic)


def exit_from_geodesic(geodesic) -> int:
    """Exit point read off a geodesic in (i, j) labels."""
    first_bulk = next(k for k, (i, j) in enumerate(geodesic) if i >= 1 and j >= 1)
    i, j = geodesic[first_bulk - 1]
    return i if j == 0 else -j


def batch_last_passage(w, ell: int = 1, kay: int = 1, exits: bool = False):
    """L (and exit labels) for a stack of lattices w[b, c, r], one row at a time.

    Within a row, L_r(c) = T(c) + max over c' <= c of (L_(r-1)(c') - T(c'-1))
    with T the running row sum, so each row is one cumulative maximum. Values
    match ``last_passage`` up to rounding. Exit labels follow the entry point
    of the first maximizer (the horizontal step on ties), which agrees with
    the geodesic rule except on ties between the two sides; those have
    probability zero for continuous weights.
    """
    B, C, R = w.shape
    idx = np.arange(C)
    prev = np.full((B, C), -np.inf)
    prev[:, 0] = 0.0
    lab = np.zeros((B, C), dtype=np.int64)
    rows = np.arange(B)[:, None]
    T = np.empty((B, C))
    V = np.empty((B, C))
    for r in range(R):
        np.cumsum(w[:, :, r], axis=1, out=T)
        V[:, 0] = prev[:, 0]
        np.subtract(prev[:, 1:], T[:, :-1], out=V[:, 1:])
        run = np.maximum.accumulate(V, axis=1)
        if exits and r >= kay:
            fresh = np.empty(V.shape, dtype=bool)
            fresh[:, 0] = True
            np.greater(V[:, 1:], run[:, :-1], out=fresh[:, 1:])
            entry = np.maximum.accumulate(np.where(fresh, idx, 0), axis=1)
            inherited = entry - ell + 1 if r == kay else lab[rows, entry]
            lab = np.where(entry < ell, -(r - kay + 1), inherited)
        np.add(run, T, out=prev)
    L = prev[:, C - 1]
    return (L, lab[:, C - 1]) if exits else L


def _batches(count, cells):
    size = max(1, min(count, BATCH_CELLS // max(cells, 1)))
    return [(s, min(size, count - s)) for s in range(0, count, size)]


def simulate(cfg: LatticeConfig, count: int, exits: bool = False, threads: int = 1, start: int = 0):
    """Raw last passage values (and exit points) for samples start, ..., start + count - 1."""
    C, R = cfg.shape

    def run(job):
        s, size = job
        w = gen_weight_batch(cfg, start + s, size)
        if exits and cfg.model == "geometric":
            # integer weights tie often; use the exact tie rule of the geodesic
            runs = [last_passage_with_geodesic(x, cfg.ell, cfg.kay) for x in w]
            return np.array([r.L for r in runs]), np.array([r.exit for r in runs])
        return batch_last_passage(w, cfg.ell, cfg.kay, exits)

    jobs = _batches(count, C * R)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    if exits:
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# exact distribution for small geometric lattices


def exact_geometric_pmf(cfg: LatticeConfig, top: int = 40) -> np.ndarray:
    """P(L = v) for v < top on a small geometric lattice, by transfer over the row front.

    The state is the vector of last passage values in the current front; each
    site update replaces g_c by max(g_(c-1), g_c) + w. Mass pushed to values
    >= top is dropped, which only affects P(L >= top).
    """
    if cfg.model != "geometric":
        raise DomainError("exact enumeration covers the geometric model only")
    C, R = cfg.shape
    if top ** C > 5e7:
        raise DomainError("lattice too wide for the exact transfer")
    rates = _rates(cfg)
    v = np.arange(top)
    P = np.zeros((top,) * C)
    P[(0,) * C] = 1.0
    for r in range(R):
        for c in range(C):
            g = rates[c, r]
            pmf = (1 - g) * g ** v if g > 0 else (v == 0).astype(float)
            step = np.zeros((top, top))
            for k in range(top):
                step[k, k:] = pmf[: top - k]
            if c == 0:
                P = np.moveaxis(np.moveaxis(P, 0, -1) @ step, -1, 0)
                continue
            Q = np.moveaxis(P, (c - 1, c), (-2, -1))
            below = np.cumsum(Q, axis=-1)
            M = np.triu(Q, 1)
            idx = np.arange(top)
            M[..., idx, idx] = below[..., idx, idx]
            P = np.moveaxis(M @ step, (-2, -1), (c - 1, c))
    return P.sum(axis=tuple(range(C - 1)))


# ---------------------------------------------------------------------------
# statistical probes


def ecdf_rescaled(cfg: LatticeConfig, N: int, tau: float, count: int, threads: int = 1,
                  grid_points: int = 201) -> EcdfReport:
    """ECDF of (L - 4N) / (16N)^(1/3) at (m, n) = (N - shift, N + shift)."""
    if count < 1000:
        raise DomainError("ecdf_rescaled needs count >= 1000")
    sm = ScalingMap(N, tau)
    raw = simulate(cfg.with_size(sm.m, sm.n), count, threads=threads)
    s = np.sort(scale_to_limit(sm, raw))
    grid = np.linspace(s[0], s[-1], grid_points)
    values = np.searchsorted(s, grid, side="right") / count
    return EcdfReport(count, grid, values, dkw_radius(count), s)


@dataclass
class StationarityReport:
    column: int
    rate: float
    ks_statistic: float
    p_value: float
    lag1_correlation: float
    correlation_bound: float
    count: int


def stationarity_test(cfg: LatticeConfig, column: int | None = None, count: int = 5000,
                      threads: int = 1) -> StationarityReport:
    """KS test of L(i, n) - L(i-1, n) against Exp(1/2 + beta_1), plus the lag-1 correlation.

    ``column`` is the bulk index i (default m // 2); increments at i and i+1
    are taken from the top row of each run.
    """
    if cfg.model != "stationary":
        raise DomainError("stationarity_test needs the stationary model")
    i = cfg.m // 2 if column is None else int(column)
    if not 1 < i < cfg.m:
        raise DomainError("column must lie strictly inside the bulk")
    tops = []
    for s, size in _batches(count, cfg.shape[0] * cfg.shape[1]):
        tops.append(_top_row(gen_weight_batch(cfg, s, size)))
    top = np.concatenate(tops)
    c = i + cfg.ell - 1
    inc = top[:, c] - top[:, c - 1]
    nxt = top[:, c + 1] - top[:, c]
    rate = 0.5 + cfg.beta[0]
    ks = stats.kstest(inc, stats.expon(scale=1.0 / rate).cdf)
    corr = float(np.corrcoef(inc, nxt)[0, 1])
    return StationarityReport(i, rate, float(ks.statistic), float(ks.pvalue), corr, 3.0 / math.sqrt(count), count)


def _top_row(w):
    """L along the last row for a batch, row by row with the same recursion."""
    B, C, R = w.shape
    row = np.full((B, C), -np.inf)
    row[:, 0] = 0.0
    for r in range(R):
        left = np.full(B, -np.inf)
        for c in range(C):
            left = w[:, c, r] + np.maximum(left, row[:, c])
            row[:, c] = left
    return row


def wilson_interval(hits: int, total: int, z: float = 1.96):
    p = hits / total
    denom = 1 + z * z / total
    mid = (p + z * z / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    lo = 0.0 if hits == 0 else max(0.0, mid - half)
    hi = 1.0 if hits == total else min(1.0, mid + half)
    return lo, hi


@dataclass
class ExitTailReport:
    N: int
    u: np.ndarray
    tail: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    count: int
    exits: np.ndarray = field(repr=False)

    def slope(self, lo: float = 0.5, hi: float = 2.5):
        """Least-squares slope of log tail against u on [lo, hi] (positive tails only)."""
        sel = (self.u >= lo) & (self.u <= hi) & (self.tail > 0)
        if sel.sum() < 2:
            return float("nan")
        return float(np.polyfit(self.u[sel], np.log(self.tail[sel]), 1)[0])

    def slope_upper(self, level: float = 0.99, lo: float = 0.5, hi: float = 2.5,
                    resamples: int = 400, seed: int = 0):
        """One-sided bootstrap upper bound for the slope; negative means a decaying tail at that level."""
        rng = np.random.default_rng(seed)
        size = np.abs(self.exits)
        scale = self.N ** (2.0 / 3.0)
        slopes = []
        for _ in range(resamples):
            pick = size[rng.integers(0, len(size), len(size))]
            tail = np.array([(pick >= t * scale).mean() for t in self.u])
            sel = (self.u >= lo) & (self.u <= hi) & (tail > 0)
            if sel.sum() >= 2:
                slopes.append(np.polyfit(self.u[sel], np.log(tail[sel]), 1)[0])
        return float(np.quantile(slopes, level)) if slopes else float("nan")


def exit_tail(cfg: LatticeConfig, N: int, u_grid, count: int = 10000, threads: int = 1) -> ExitTailReport:
    """Empirical P(|Z| >= u N^(2/3)) with Wilson intervals, on an N x N bulk."""
    if cfg.model != "thick":
        raise DomainError("exit_tail is defined for the thick model")
    _, exits = simulate(cfg.with_size(N, N), count, exits=True, threads=threads)
    u = np.asarray(u_grid, dtype=float)
    size = np.abs(exits)
    hits = np.array([(size >= t * N ** (2.0 / 3.0)).sum() for t in u])
    bounds = np.array([wilson_interval(int(h), count) for h in hits])
    return ExitTailReport(N, u, hits / count, bounds[:, 0], bounds[:, 1], count, exits)


@dataclass
class BoundaryReport:
    p: int
    N: int
    u: float
    mean: float
    variance: float
    skewness: float
    ks_statistic: float | None
    ks_pvalue: float | None
    count: int


def thin_lpp(w):
    """L across a batch of thin p x M lattices w[b, row, col]: cumulative maxima row by row."""
    B, p, M = w.shape
    S = np.cumsum(w[:, 0, :], axis=1)
    for row in range(1, p):
        T = np.cumsum(w[:, row, :], axis=1)
        shifted = np.concatenate([np.zeros((B, 1)), T[:, :-1]], axis=1)
        S = np.maximum.accumulate(S - shifted, axis=1) + T
    return S[:, -1]


def boundary_process_probe(p: int, N: int, u: float = 1.0, count: int = 5000, seed: int = 0,
                           batch: int = 256) -> BoundaryReport:
    """Moments of (L_(p, uN) - uN) / sqrt(N) for Exp(1) weights; KS against N(0, u) when p = 1."""
    M = int(math.floor(u * N))
    if p < 1 or M < 1:
        raise DomainError("need p >= 1 and u N >= 1")
    vals = []
    for s in range(0, count, batch):
        size = min(batch, count - s)
        U = np.stack([sample_stream(seed, s + t).random((p, M)) for t in range(size)])
        vals.append(thin_lpp(-np.log1p(-U)))
    x = (np.concatenate(vals) - M) / math.sqrt(N)
    ks = stats.kstest(x, stats.norm(scale=math.sqrt(M / N)).cdf) if p == 1 else None
    return BoundaryReport(p, N, u, float(x.mean()), float(x.var(ddof=1)), float(stats.skew(x)),
                          None if ks is None else float(ks.statistic),
                          None if ks is None else float(ks.pvalue), count)
