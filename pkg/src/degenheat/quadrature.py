"""Quadrature for |y|^a-weighted integrals and singular time integrals.

The weight |y|^a (a > -1) is integrable but not smooth at y = 0, so
panels touching zero use Gauss-Jacobi rules that absorb the weight
exactly; panels away from zero use Gauss-Legendre with the weight folded
into the node weights.  Time integrals with an integrable endpoint
singularity at tau = t use a geometrically graded mesh clustered at the
endpoint, with a geometric-tail extrapolation of the last panels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special as sps

DEFAULT_TOL = 1e-8


@lru_cache(maxsize=256)
def _legendre_rule(m: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(m)


@lru_cache(maxsize=256)
def _jacobi_rule(m: int, a: float) -> tuple[np.ndarray, np.ndarray]:
    # weight (1+x)^a on (-1, 1)
    x, w = sps.roots_jacobi(m, 0.0, a)
    return x, w


@dataclass(frozen=True)
class WeightedRule1D:
    """Nodes and weights integrating f against |y|^a over (lo, hi).

    The weight is folded into the rule: sum(weights * f(nodes)) approximates
    the weighted integral, exactly for polynomials up to the rule degree.
    """

    nodes: np.ndarray
    weights: np.ndarray
    a: float
    interval: tuple[float, float]

    def apply(self, f) -> float:
        return float(np.sum(self.weights * _eval_vec(f, self.nodes)))


def weighted_rule(lo: float, hi: float, a: float, m: int = 16) -> WeightedRule1D:
    """Build a rule for int_lo^hi |y|^a f(y) dy; splits at 0 if needed."""
    if not a > -1.0:
        raise ValueError("weight exponent must satisfy a > -1")
    if not lo < hi:
        raise ValueError("empty interval")
    if lo < 0.0 < hi:
        left = weighted_rule(lo, 0.0, a, m)
        right = weighted_rule(0.0, hi, a, m)
        return WeightedRule1D(
            np.concatenate([left.nodes, right.nodes]),
            np.concatenate([left.weights, right.weights]),
            a,
            (lo, hi),
        )
    if hi <= 0.0:
        mirrored = weighted_rule(-hi, -lo, a, m)
        return WeightedRule1D(
            -mirrored.nodes[::-1], mirrored.weights[::-1], a, (lo, hi)
        )
    # now 0 <= lo < hi
    if lo == 0.0 and a != 0.0:
        x, w = _jacobi_rule(m, a)
        h = hi
        nodes = h * (x + 1.0) / 2.0
        weights = w * (h / 2.0) ** (1.0 + a)
        return WeightedRule1D(nodes, weights, a, (lo, hi))
    x, w = _legendre_rule(m)
    nodes = lo + (hi - lo) * (x + 1.0) / 2.0
    weights = w * (hi - lo) / 2.0 * np.abs(nodes) ** a
    return WeightedRule1D(nodes, weights, a, (lo, hi))


def _eval_vec(f, nodes: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(f(nodes), dtype=float)
        if vals.shape == nodes.shape:
            return vals
    except (TypeError, ValueError):
        pass
    return np.array([float(f(y)) for y in nodes])


def integrate_weighted_interval(
    f, lo: float, hi: float, a: float, tol: float = DEFAULT_TOL
) -> float:
    """Adaptive evaluation of int_lo^hi |y|^a f(y) dy with error <= tol.

    Panels are refined where a coarse/fine rule pair disagrees; panels
    touching y = 0 always keep the Jacobi endpoint treatment.
    """
    if not lo < hi:
        raise ValueError("empty interval")
    panels = [(lo, 0.0), (0.0, hi)] if lo < 0.0 < hi else [(lo, hi)]
    total = 0.0
    err = 0.0
    budget = tol
    stack = [(p0, p1, 0) for (p0, p1) in panels]
    max_depth = 48
    while stack:
        p0, p1, depth = stack.pop()
        coarse = weighted_rule(p0, p1, a, 12).apply(f)
        fine = weighted_rule(p0, p1, a, 24).apply(f)
        local_err = abs(fine - coarse)
        local_budget = budget * (p1 - p0) / (hi - lo)
        # panels shrunk to the roundoff scale of the running total cannot
        # improve the result; accept them instead of refining forever
        noise_floor = 1e-14 * (abs(total) + abs(fine))
        if local_err <= max(local_budget, noise_floor) or depth >= max_depth:
            if depth >= max_depth and local_err > tol:
                raise RuntimeError(
                    "weighted quadrature did not converge on "
                    f"[{p0}, {p1}]; achieved estimate {local_err:.3e}"
                )
            total += fine
            err += local_err
            continue
        mid = 0.5 * (p0 + p1)
        # left child last so smooth mass accumulates before singular fringes
        stack.append((mid, p1, depth + 1))
        stack.append((p0, mid, depth + 1))
    return total


def integrate_face(
    f,
    lo,
    hi,
    axis: int,
    coord: float,
    a: float,
    tol: float = DEFAULT_TOL,
    m: int = 16,
) -> float:
    """Integrate f over a box face with the |y|^a surface weight.

    The box is [lo_i, hi_i] in R^n with the weighted y-axis last; the
    face is {x_axis = coord}.  On faces with axis = n-1 the weight is the
    constant |coord|^a; otherwise it varies along the in-face y-axis.
    f maps an (m, n) array of points to m values.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = lo.size
    free = [i for i in range(n) if i != axis]
    rules = []
    for i in free:
        if i == n - 1:
            rules.append(weighted_rule(lo[i], hi[i], a, m))
        else:
            x, w = _legendre_rule(m)
            nodes = lo[i] + (hi[i] - lo[i]) * (x + 1.0) / 2.0
            rules.append(
                WeightedRule1D(nodes, w * (hi[i] - lo[i]) / 2.0, 0.0, (lo[i], hi[i]))
            )
    grids = np.meshgrid(*[r.nodes for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r.weights for r in rules], indexing="ij")
    npts = grids[0].size if grids else 1
    pts = np.empty((npts, n))
    pts[:, axis] = coord
    weight = np.ones(npts)
    for g, wg, i in zip(grids, wgrids, free):
        pts[:, i] = g.ravel()
        weight *= wg.ravel()
    if axis == n - 1:
        weight *= abs(coord) ** a
    vals = np.asarray(f(pts), dtype=float)
    return float(np.sum(weight * vals))


@dataclass(frozen=True)
class GradedTimeMesh:
    """Geometric panels on [t_start, t_end) clustered toward t_end."""

    t_start: float
    t_end: float
    levels: int = 40
    ratio: float = 0.5

    def __post_init__(self) -> None:
        if not self.t_start < self.t_end:
            raise ValueError("empty time interval")
        if not 0.0 < self.ratio < 1.0:
            raise ValueError("grading ratio must lie in (0, 1)")
        if self.levels < 2:
            raise ValueError("need at least two levels")

    def breakpoints(self) -> np.ndarray:
        span = self.t_end - self.t_start
        pts = self.t_end - span * self.ratio ** np.arange(self.levels + 1)
        return pts

    def panels(self) -> list[tuple[float, float]]:
        b = self.breakpoints()
        return [(float(b[j]), float(b[j + 1])) for j in range(self.levels)]


def integrate_time_improper(
    g, mesh: GradedTimeMesh, m: int = 16, tail_extrapolate: bool = True
) -> float:
    """Composite rule for int g(tau) dtau with a singularity at t_end.

    Panel contributions near the endpoint decay geometrically for
    algebraic singularities; the missed sliver beyond the last panel is
    completed by summing that geometric tail.  Growing contributions
    toward the endpoint raise a divergence diagnostic.
    """
    x, w = _legendre_rule(m)
    contribs = []
    for p0, p1 in mesh.panels():
        nodes = p0 + (p1 - p0) * (x + 1.0) / 2.0
        vals = _eval_vec(g, nodes)
        contribs.append(float(np.sum(w * vals)) * (p1 - p0) / 2.0)
    total = math.fsum(contribs)
    c_prev, c_last = contribs[-2], contribs[-1]
    if abs(c_last) > 1e-13 * abs(total):
        if abs(c_last) >= abs(c_prev) > 0.0:
            raise RuntimeError(
                "non-decreasing panel contributions toward the endpoint; "
                "the time integral looks divergent"
            )
        if tail_extrapolate and c_prev != 0.0 and c_last * c_prev > 0.0:
            # estimate the geometric decay over a window of panels; single
            # panel ratios are noisy because t - tau cancels near the end
            k = min(6, len(contribs) - 1)
            c_far = contribs[-1 - k]
            q = c_last / c_prev
            if c_far != 0.0 and c_last / c_far > 0.0:
                q = (c_last / c_far) ** (1.0 / k)
            if 0.0 < q < 1.0:
                total += c_last * q / (1.0 - q)
    return total
