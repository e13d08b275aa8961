"""Rate-invariant registration of SRVFs and Karcher means on the hypersphere.

Registration searches monotone time reparameterizations gamma with a dynamic
program over a lattice of (source index, target index) pairs; the elastic
group action (q o gamma) * sqrt(gamma') makes the comparison rate-invariant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AntipodalPoint, EmptySet, NoConvergenceWarning, ShapeMismatch
from .geometry import Srvf, TangentChart, exp_map, geodesic_distance, log_map, sphere_inner

# Lattice moves (a, b): predecessor (i-a, j-b); local slope bounded in [1/3, 3].
# Ordered so ties resolve to the most diagonal, smallest step first.
DP_MOVES = sorted(((a, b) for a in (1, 2, 3) for b in (1, 2, 3)),
                  key=lambda ab: (abs(ab[0] - ab[1]), ab[0] + ab[1]))

# Default lattice upsampling for the DP grid; 1 runs on the raw sample grid.
# Finer grids buy little here: the residual floor is the sqrt-slope
# quantization of the move set, not the knot resolution.
DP_REFINE = 1


@dataclass(frozen=True)
class Warping:
    """Monotone reparameterization of [0, 1], sampled on the SRVF grid."""

    values: np.ndarray          # (T-1,) knots, gamma_0 = 0, gamma_last = 1

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] < 1:
            raise ShapeMismatch("warping needs a 1-D knot array")
        if values.shape[0] >= 2:
            if abs(values[0]) > 1e-12 or abs(values[-1] - 1.0) > 1e-12:
                raise ShapeMismatch("warping must map 0 to 0 and 1 to 1")
            if np.any(np.diff(values) < 0):
                raise ShapeMismatch("warping must be non-decreasing")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def identity(cls, n_knots: int) -> "Warping":
        if n_knots == 1:
            return cls(np.zeros(1))
        return cls(np.linspace(0.0, 1.0, n_knots))

    def is_identity(self, tol: float = 0.0) -> bool:
        ident = Warping.identity(self.values.shape[0]).values
        return bool(np.max(np.abs(self.values - ident)) <= tol)

    def inverse(self) -> "Warping":
        """Numerical inverse by swapping axes of the knot graph."""
        if self.values.shape[0] == 1:
            return self
        grid = np.linspace(0.0, 1.0, self.values.shape[0])
        return Warping(np.interp(grid, self.values, grid))


@dataclass(frozen=True)
class KarcherConfig:
    step: float = 0.5
    tol: float = 1e-8
    max_iters: int = 100
    align_each_iter: bool = False

    def __post_init__(self):
        if not 0.0 < self.step <= 1.0:
            raise ShapeMismatch("step must be in (0, 1]")
        if self.tol <= 0:
            raise ShapeMismatch("tol must be positive")
        if self.max_iters < 1:
            raise ShapeMismatch("max_iters must be >= 1")


def _interp_rows(q: np.ndarray, grid: np.ndarray, at: np.ndarray) -> np.ndarray:
    out = np.empty((at.shape[0], q.shape[1]))
    for j in range(q.shape[1]):
        out[:, j] = np.interp(at, grid, q[:, j])
    return out


def group_action(q: Srvf, gamma: Warping) -> Srvf:
    """Elastic action (q o gamma) * sqrt(gamma'), renormalized to unit norm."""
    m = q.n_intervals
    if gamma.values.shape[0] != m:
        raise ShapeMismatch(f"warping has {gamma.values.shape[0]} knots, srvf has {m} samples")
    if m == 1:
        return q
    grid = np.linspace(0.0, 1.0, m)
    warped = _interp_rows(q.samples, grid, gamma.values)
    rate = np.gradient(gamma.values, grid)
    out = warped * np.sqrt(np.maximum(rate, 0.0))[:, None]
    norm = math.sqrt(sphere_inner(out, out))
    if norm < 1e-12:
        raise ShapeMismatch("group action collapsed the srvf (degenerate warping)")
    return Srvf(out / norm)


class SegmentCostTable:
    """Precomputed inner products for the DP integrand.

    A lattice move (a, b) matches source samples only at positions
    j2 + step*b/a whose fractional parts lie in {0, 1/3, 1/2, 2/3}, so all
    interpolated rows of q2 and their products with q1 can be tabulated once.
    """

    FRACS = (0.0, 1.0 / 3.0, 0.5, 2.0 / 3.0)

    def __init__(self, q1: np.ndarray, q2: np.ndarray):
        self.m = q1.shape[0]
        self.dt = 1.0 / (self.m - 1)
        self.s1 = np.einsum("ij,ij->i", q1, q1)
        self.dots = {}
        self.s2 = {}
        for f in self.FRACS:
            rows = q2 if f == 0.0 else (1.0 - f) * q2[:-1] + f * q2[1:]
            self.dots[f] = q1 @ rows.T
            self.s2[f] = np.einsum("ij,ij->i", rows, rows)

    @staticmethod
    def _snap(frac: float) -> float:
        for f in SegmentCostTable.FRACS:
            if abs(frac - f) < 1e-9:
                return f
        return frac

    def cost(self, i2: int, j2: int, i: int, j: int) -> float:
        """Integrated L2 mismatch of one lattice segment, right-endpoint rule."""
        a = i - i2
        b = j - j2
        root = math.sqrt(b / a)
        total = 0.0
        for step in range(1, a + 1):
            t = i2 + step
            pos = step * b / a
            lo = j2 + int(pos)
            frac = self._snap(pos - int(pos))
            dots, s2 = self.dots[frac], self.s2[frac]
            total += (self.s1[t] - 2.0 * root * dots[t, lo] + (b / a) * s2[lo]) * self.dt
        return total

    def move_costs(self, a: int, b: int) -> list:
        """All segment costs of move (a, b) at once, bitwise equal to cost().

        Returns an (m, m) nested list where entry [i][j] is the cost of the
        segment (i-a, j-b) -> (i, j); entries with i < a or j < b are None.
        """
        m = self.m
        root = math.sqrt(b / a)
        acc = None
        for step in range(1, a + 1):
            pos = step * b / a
            lo = int(pos)
            frac = self._snap(pos - int(pos))
            dots, s2 = self.dots[frac], self.s2[frac]
            rows = slice(step, m - a + step)
            cols = slice(lo, m - b + lo)
            term = (self.s1[rows, None] - 2.0 * root * dots[rows, cols]
                    + (b / a) * s2[cols][None, :]) * self.dt
            acc = term if acc is None else acc + term
        full = [[None] * m for _ in range(m)]
        block = acc.tolist()
        for i in range(a, m):
            row = full[i]
            src = block[i - a]
            for j in range(b, m):
                row[j] = src[j - b]
        return full


def _upsample(q: np.ndarray, refine: int) -> np.ndarray:
    """Linear upsampling by an integer factor; exact on piecewise-linear data."""
    m = q.shape[0]
    fine = np.linspace(0.0, 1.0, refine * (m - 1) + 1)
    return _interp_rows(q, np.linspace(0.0, 1.0, m), fine)


def optimal_warping(q1: Srvf, q2: Srvf, refine: int = DP_REFINE) -> tuple[Warping, float]:
    """DP search for the warping of q2 that best matches q1.

    Returns the warping (sampled at the T-1 data knots) and the DP objective
    value (the discretized ||q1 - sqrt(gamma') q2 o gamma||^2 along the
    optimal lattice path).  ``refine`` runs the lattice on a linearly
    upsampled grid for finer warping resolution with the same move set.
    """
    if q1.samples.shape != q2.samples.shape:
        raise ShapeMismatch(f"{q1.samples.shape} vs {q2.samples.shape}")
    if refine < 1:
        raise ShapeMismatch("refine must be a positive integer")
    coarse = q1.n_intervals
    if coarse == 1:
        return Warping.identity(1), 0.0
    a1 = _upsample(q1.samples, refine) if refine > 1 else q1.samples
    a2 = _upsample(q2.samples, refine) if refine > 1 else q2.samples
    m = a1.shape[0]
    grid = np.linspace(0.0, 1.0, m)
    table = SegmentCostTable(a1, a2)
    move_tables = [(a, b, table.move_costs(a, b)) for a, b in DP_MOVES]

    inf = math.inf
    best = [[inf] * m for _ in range(m)]
    pred = [[None] * m for _ in range(m)]
    best[0][0] = 0.0
    for i in range(1, m):
        row = best[i]
        for j in range(1, m):
            for a, b, costs in move_tables:
                i2, j2 = i - a, j - b
                if i2 < 0 or j2 < 0:
                    continue
                base = best[i2][j2]
                if base == inf:
                    continue
                cand = base + costs[i][j]
                if cand < row[j]:
                    row[j] = cand
                    pred[i][j] = (i2, j2)
    if best[m - 1][m - 1] == inf:
        raise ShapeMismatch("no lattice path reaches the endpoint")

    path_i, path_j = [m - 1], [m - 1]
    while path_i[-1] != 0 or path_j[-1] != 0:
        i2, j2 = pred[path_i[-1]][path_j[-1]]
        path_i.append(i2)
        path_j.append(j2)
    path_i.reverse()
    path_j.reverse()
    knots = np.linspace(0.0, 1.0, coarse)
    gamma = np.interp(knots, grid[path_i], grid[path_j])
    gamma[0], gamma[-1] = 0.0, 1.0
    return Warping(gamma), best[m - 1][m - 1]


def align(q1: Srvf, q2: Srvf, refine: int = DP_REFINE) -> tuple[Warping, Srvf, float]:
    """Register q2 to q1; returns (warping, warped q2, geodesic cost).

    Falls back to the identity warping whenever the DP pick does not beat it
    on the true geodesic distance, so the cost never exceeds d(q1, q2).
    """
    gamma, _ = optimal_warping(q1, q2, refine=refine)
    plain = geodesic_distance(q1, q2)
    if gamma.is_identity():
        return gamma, q2, plain
    q2_star = group_action(q2, gamma)
    cost = geodesic_distance(q1, q2_star)
    if plain <= cost + 1e-15:
        return Warping.identity(q2.n_intervals), q2, plain
    return gamma, q2_star, cost


def align_set_to_reference(srvfs, ref: Srvf) -> list[Srvf]:
    return [align(ref, q)[1] for q in srvfs]


def _fsum_mean(arrays) -> np.ndarray:
    """Permutation-invariant elementwise mean via exact float summation."""
    stack = np.stack([np.asarray(a, dtype=np.float64) for a in arrays])
    n = stack.shape[0]
    flat = stack.reshape(n, -1)
    out = np.array([math.fsum(flat[:, k]) for k in range(flat.shape[1])])
    return (out / n).reshape(stack.shape[1:])


@dataclass(frozen=True)
class KarcherInfo:
    converged: bool
    iterations: int
    final_step_norm: float


def karcher_mean_info(srvfs, config: KarcherConfig = KarcherConfig()) -> tuple[Srvf, KarcherInfo]:
    """Riemannian center of mass of a set of sphere points.

    Iterates m <- exp_m(step * mean_i log_m(q_i)) until the mean tangent norm
    falls under tol.  With align_each_iter, every q_i is re-registered to the
    running estimate before its log.  Initialization and the tangent
    reduction are permutation-invariant (exact summation), so the result is
    bit-identical under input reordering.
    """
    srvfs = list(srvfs)
    if not srvfs:
        raise EmptySet("karcher mean of an empty set")
    if len(srvfs) == 1:
        return srvfs[0], KarcherInfo(True, 0, 0.0)

    init = _fsum_mean([q.samples for q in srvfs])
    norm = math.sqrt(sphere_inner(init, init))
    if norm < 1e-9:
        raise AntipodalPoint("data too spread for a stable Karcher initialization")
    mean = Srvf(init / norm)

    best = (np.inf, mean)
    for it in range(config.max_iters):
        chart = TangentChart(mean)
        members = align_set_to_reference(srvfs, mean) if config.align_each_iter else srvfs
        logs = [log_map(chart, q).samples for q in members]
        v_bar = _fsum_mean(logs)
        v_norm = math.sqrt(sphere_inner(v_bar, v_bar))
        if v_norm < best[0]:
            best = (v_norm, mean)
        if v_norm < config.tol:
            return mean, KarcherInfo(True, it, v_norm)
        mean = exp_map(chart, config.step * v_bar)
    warnings.warn(
        f"karcher mean did not reach tol={config.tol} in {config.max_iters} iterations "
        f"(best step norm {best[0]:.3e})", NoConvergenceWarning)
    return best[1], KarcherInfo(False, config.max_iters, best[0])


def karcher_mean(srvfs, config: KarcherConfig = KarcherConfig()) -> Srvf:
    return karcher_mean_info(srvfs, config)[0]


def frechet_variance(center: Srvf, srvfs) -> float:
    return float(sum(geodesic_distance(center, q) ** 2 for q in srvfs))
