"""Heat-ball mean-value operators and the Harnack-quotient experiment.

The solid mean of u at xi0 with radius parameter r averages u over the
heat ball against the kernel E = |y|^a |grad_Y Gamma|^2 / Gamma^2,
normalized by phi(r).  Constants, functions affine in the free
coordinates, and time-shifted fundamental solutions are reproduced
exactly up to quadrature error.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import HeatBall, heat_ball_sample, heat_ball_threshold
from .kernel import gamma_fs_vec, gamma_grad_y_vec
from .params import KernelParams, SpaceTimePoint
from .quadrature import _legendre_rule, weighted_rule

TOP_BUFFER = 1e-4


def phi_weight(params: KernelParams, x0: float, r: float) -> float:
    """Normalizing weight (4 pi r)^{(n+a)/2} (1 + x0^2/r)^{a/2}."""
    if not r > 0.0:
        raise ValueError("radius parameter must be positive")
    n, a = params.n, params.a
    return (4.0 * math.pi * r) ** ((n + a) / 2.0) * (1.0 + x0 * x0 / r) ** (a / 2.0)


def phi_weight_prime(params: KernelParams, x0: float, r: float) -> float:
    """d phi / d r; positive for all r > 0."""
    if not r > 0.0:
        raise ValueError("radius parameter must be positive")
    n, a = params.n, params.a
    return (
        (4.0 * math.pi * r) ** ((n + a) / 2.0)
        * (1.0 + x0 * x0 / r) ** (a / 2.0 - 1.0)
        * ((n + a) / (2.0 * r) + n * x0 * x0 / (2.0 * r * r))
    )


@dataclass(frozen=True)
class MeanValueWeight:
    phi_r: float
    phi_r_prime: float

    @classmethod
    def at(cls, params: KernelParams, x0: float, r: float) -> "MeanValueWeight":
        return cls(phi_weight(params, x0, r), phi_weight_prime(params, x0, r))


def mean_value_kernel(params: KernelParams, xi0: SpaceTimePoint, spatial, t) -> np.ndarray:
    """E(xi0; (Y, t)) = |y|^a |grad_Y Gamma(xi0; Y, t)|^2 / Gamma^2."""
    spatial = np.atleast_2d(np.asarray(spatial, dtype=float))
    gam = gamma_fs_vec(params, xi0.spatial, xi0.t, spatial, t)
    grad = gamma_grad_y_vec(params, xi0.spatial, xi0.t, spatial, t)
    y = spatial[..., -1]
    return np.abs(y) ** params.a * np.sum(grad * grad, axis=-1) / gam**2


def _section_radius2(
    params: KernelParams, xi0: SpaceTimePoint, log_theta: float, delta: float, ys
) -> np.ndarray:
    """Squared free-coordinate radius of the heat-ball slice at depth delta.

    At source time t0 - delta and weighted coordinate y, membership reads
    |X0' - Y'|^2 < R^2(delta, y); negative values mean an empty slice.
    """
    ys = np.asarray(ys, dtype=float)
    sp = np.zeros((len(ys), params.n))
    sp[:, :-1] = np.asarray(xi0.x_prime, dtype=float)
    sp[:, -1] = ys
    gam = gamma_fs_vec(params, xi0.spatial, xi0.t, sp, xi0.t - delta)
    with np.errstate(divide="ignore"):
        log_gam = np.where(gam > 0.0, np.log(np.maximum(gam, 1e-300)), -np.inf)
    return 4.0 * delta * (log_gam - log_theta)


def _section_depth(
    params: KernelParams, xi0: SpaceTimePoint, log_theta: float, depth_ub: float
) -> float:
    x0 = xi0.x
    w = math.sqrt(2.0 * params.n * depth_ub) + abs(x0)
    ys = x0 + np.linspace(-w, w, 513)

    def occupied(delta: float) -> bool:
        return bool(np.any(_section_radius2(params, xi0, log_theta, delta, ys) > 0.0))

    lo, hi = depth_ub * 1e-6, depth_ub
    if occupied(hi):
        raise RuntimeError("bounding depth does not enclose the heat ball")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if occupied(mid):
            lo = mid
        else:
            hi = mid
    return hi


def _y_intervals(
    params: KernelParams,
    xi0: SpaceTimePoint,
    log_theta: float,
    delta: float,
    y_lo: float,
    y_hi: float,
    scan: int = 801,
) -> list[tuple[float, float]]:
    ys = np.linspace(y_lo, y_hi, scan)
    vals = _section_radius2(params, xi0, log_theta, delta, ys)
    inside = vals > 0.0
    if not np.any(inside):
        return []

    brackets = []  # (inside endpoint, outside endpoint) pairs
    runs = []
    i = 0
    while i < scan:
        if inside[i]:
            j = i
            while j + 1 < scan and inside[j + 1]:
                j += 1
            runs.append((i, j))
            i = j + 1
        else:
            i += 1
    for i, j in runs:
        brackets.append((ys[i], ys[i - 1]) if i > 0 else (ys[0], ys[0]))
        brackets.append((ys[j], ys[j + 1]) if j < scan - 1 else (ys[-1], ys[-1]))
    a = np.array([b[0] for b in brackets])
    b = np.array([b[1] for b in brackets])
    for _ in range(45):
        mid = 0.5 * (a + b)
        good = _section_radius2(params, xi0, log_theta, delta, mid) > 0.0
        a = np.where(good, mid, a)
        b = np.where(good, b, mid)
    roots = 0.5 * (a + b)
    out = []
    for k in range(len(runs)):
        lo, hi = roots[2 * k], roots[2 * k + 1]
        if hi > lo:
            out.append((float(lo), float(hi)))
    return out


def _y_rule(lo: float, hi: float, a: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights absorbing the |y|^{-a} cusp of the y-marginal.

    The integrand passed to the rule is |y|^{2a}|grad Gamma|^2/Gamma^2
    times the slice integral, which is smooth across y = 0.
    """
    if lo < 0.0 < hi:
        n1, w1 = _y_rule(lo, 0.0, a, m)
        n2, w2 = _y_rule(0.0, hi, a, m)
        return np.concatenate([n1, n2]), np.concatenate([w1, w2])
    if abs(lo) < 1e-300 or abs(hi) < 1e-300:
        # Jacobi rule for the cusp at 0, clustered rule for the
        # square-root edge at the far endpoint
        mid = 0.5 * (lo + hi)
        inner = (lo, mid) if abs(lo) < abs(hi) else (mid, hi)
        outer = (mid, hi) if abs(lo) < abs(hi) else (lo, mid)
        rule = weighted_rule(inner[0], inner[1], -a, m)
        n2, w2 = _y_rule(outer[0], outer[1], a, m)
        return np.concatenate([rule.nodes, n2]), np.concatenate([rule.weights, w2])
    x, w = _legendre_rule(m)
    # clustered map with vanishing Jacobian at the edges; the slice
    # radius vanishes like a square root there
    s = 0.5 * (3.0 * x - x**3)
    js = 1.5 * (1.0 - x**2)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    nodes = mid + half * s
    weights = w * js * half * np.abs(nodes) ** (-a)
    return nodes, weights


def _delta_panels(d_lo: float, d_hi: float, levels: int, ratio: float = 0.5):
    """Geometric panels on [d_lo, d_hi] clustered toward both endpoints."""
    mid = 0.5 * (d_lo + d_hi)
    w = mid - d_lo
    bp = [d_lo] + [d_lo + w * ratio**k for k in range(levels - 1, 0, -1)] + [mid]
    w = d_hi - mid
    bp += [d_hi - w * ratio**k for k in range(1, levels)] + [d_hi]
    return [(bp[i], bp[i + 1]) for i in range(len(bp) - 1)]


def _slab_integral(
    params: KernelParams,
    u,
    xi0: SpaceTimePoint,
    log_theta: float,
    d_lo: float,
    d_hi: float,
    y_lo: float,
    y_hi: float,
    m: int,
    levels: int,
) -> float:
    """Integral of u * E over the heat-ball slab with depth in [d_lo, d_hi]."""
    n = params.n
    if n not in (2, 3):
        raise NotImplementedError("section quadrature supports n = 2 and n = 3")
    gx, gw = _legendre_rule(m)
    xp0 = np.asarray(xi0.x_prime, dtype=float)
    total = 0.0
    for p0, p1 in _delta_panels(d_lo, d_hi, levels):
        dn = p0 + (p1 - p0) * (gx + 1.0) / 2.0
        dw = gw * (p1 - p0) / 2.0
        for delta, wd in zip(dn, dw):
            tau = xi0.t - delta
            acc = 0.0
            for lo, hi in _y_intervals(params, xi0, log_theta, delta, y_lo, y_hi):
                yn, yw = _y_rule(lo, hi, params.a, m)
                rr = _section_radius2(params, xi0, log_theta, delta, yn)
                keep = rr > 0.0
                if not np.any(keep):
                    continue
                yn, yw, rad = yn[keep], yw[keep], np.sqrt(rr[keep])
                if n == 2:
                    # slice is an interval in the single free coordinate
                    off = np.outer(rad, gx)
                    pts = np.empty((len(yn), m, 2))
                    pts[..., 0] = xp0[0] + off
                    pts[..., 1] = yn[:, None]
                    sw = rad[:, None] * gw[None, :]
                else:
                    # slice is a disk; tensor radius-angle rule
                    ang = 2.0 * math.pi * (np.arange(2 * m) + 0.5) / (2 * m)
                    rho = rad[:, None, None] * (gx[None, :, None] + 1.0) / 2.0
                    pts = np.empty((len(yn), m, 2 * m, 3))
                    pts[..., 0] = xp0[0] + rho * np.cos(ang)
                    pts[..., 1] = xp0[1] + rho * np.sin(ang)
                    pts[..., 2] = yn[:, None, None]
                    sw = (
                        rho
                        * (rad[:, None, None] / 2.0)
                        * gw[None, :, None]
                        * (2.0 * math.pi / (2 * m))
                    )
                flat = pts.reshape(-1, n)
                gam = gamma_fs_vec(params, xi0.spatial, xi0.t, flat, tau)
                grad = gamma_grad_y_vec(params, xi0.spatial, xi0.t, flat, tau)
                wg2 = np.sum(grad * grad, axis=-1) * np.abs(flat[:, -1]) ** (
                    2.0 * params.a
                )
                vals = (u(flat, tau) * wg2 / gam**2).reshape(pts.shape[:-1])
                axes = tuple(range(1, vals.ndim))
                acc += float(np.sum(yw * np.sum(vals * sw, axis=axes)))
            total += wd * acc
    return total


def solid_mean(
    params: KernelParams,
    u,
    xi0: SpaceTimePoint,
    r: float,
    density: int = 12,
    method: str = "sections",
) -> float:
    """Mean of u over the heat ball of radius parameter r at xi0.

    u is a callable u(spatial_points, t) vectorized over rows.  The
    kernel pole sits at the top of the ball; the slab above depth
    r * 1e-4 carries mass of order delta log^2 delta, so it is
    integrated directly on geometrically graded panels down to a
    machine-negligible sliver rather than truncated.
    """
    if density <= 0:
        raise ValueError("density must be positive")
    ball = HeatBall(xi0, r, params)
    phi = phi_weight(params, xi0.x, r)
    if method == "lattice":
        sample = heat_ball_sample(ball, density)
        keep = sample.times < xi0.t - r * TOP_BUFFER
        ev = mean_value_kernel(params, xi0, sample.spatial[keep], sample.times[keep])
        uv = np.array(
            [
                float(u(sample.spatial[keep][i : i + 1], sample.times[keep][i])[0])
                for i in range(int(np.sum(keep)))
            ]
        )
        return float(np.sum(uv * ev) * sample.cell_volume) / phi
    if method != "sections":
        raise ValueError("unknown solid-mean method")
    depth_ub, radius = ball.bounding_box()
    log_theta = math.log(heat_ball_threshold(params, xi0.x, r))
    depth = _section_depth(params, xi0, log_theta, depth_ub)
    delta0 = r * TOP_BUFFER
    y_lo, y_hi = xi0.x - radius, xi0.x + radius
    levels = max(8, density)
    bulk = _slab_integral(
        params, u, xi0, log_theta, delta0, depth, y_lo, y_hi, density, levels
    )
    # pole slab: geometric panels shrinking toward the pole time
    tip = 0.0
    d_hi = delta0
    for _ in range(32):
        d_lo = 0.5 * d_hi
        tip += _slab_integral(
            params, u, xi0, log_theta, d_lo, d_hi, y_lo, y_hi, density, 1
        )
        d_hi = d_lo
    return (bulk + tip) / phi


@dataclass(frozen=True)
class MonotonicityReport:
    radii: list[float]
    means: list[float]
    nonincreasing: bool
    max_violation: float
    gap_constant: float | None

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def mean_derivative_sign(
    params: KernelParams,
    u,
    xi0: SpaceTimePoint,
    radii,
    density: int = 12,
    tol: float = 1e-4,
    mass_in_ball: float | None = None,
) -> MonotonicityReport:
    """Check that r -> solid_mean(u, r) is nonincreasing.

    Valid for u with nonpositive 𝓛-image (potentials of nonnegative
    measures).  When the measure mass inside the largest ball is given,
    the empirical constant of the quantitative mean-value gap between
    consecutive radii is reported.
    """
    radii = sorted(float(r) for r in radii)
    if len(radii) < 2:
        raise ValueError("need at least two radii")
    means = [solid_mean(params, u, xi0, r, density) for r in radii]
    diffs = np.diff(means)
    scale = max(abs(m) for m in means) or 1.0
    max_violation = float(max(0.0, np.max(diffs) / scale))
    gap_constant = None
    if mass_in_ball is not None and mass_in_ball > 0.0:
        r_lo, r_hi = radii[0], radii[-1]
        denom = (
            1.0 / phi_weight(params, xi0.x, r_lo)
            - 1.0 / phi_weight(params, xi0.x, r_hi)
        ) * mass_in_ball
        if denom > 0.0:
            gap_constant = float((means[0] - means[-1]) / denom)
    return MonotonicityReport(
        radii=radii,
        means=[float(m) for m in means],
        nonincreasing=max_violation <= tol,
        max_violation=max_violation,
        gap_constant=gap_constant,
    )


@dataclass(frozen=True)
class HarnackReport:
    r: float
    bottom_average: float
    interior_inf: float
    quotient: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def harnack_quotient(
    params: KernelParams, r: float, u, density: int = 24
) -> HarnackReport:
    """Bottom-slice weighted average of u over the interior infimum.

    u must be nonnegative and parabolic on the lens region of size 2r
    around the origin.  The average runs over {|X|^2 <= 3(n+a)r/4} at
    time -3r/2 with the |x|^a weight on the last coordinate; the
    infimum is sampled over the heat ball of radius 3r/4 at the origin.
    """
    if params.n != 2:
        raise NotImplementedError("harnack experiment supports n = 2")
    if not r > 0.0:
        raise ValueError("radius parameter must be positive")
    rho0 = math.sqrt(3.0 * (params.n + params.a) * r / 4.0)
    t_bot = -1.5 * r
    rule = weighted_rule(-rho0, rho0, params.a, max(8, density))
    gx, gw = _legendre_rule(max(8, density))
    num = 0.0
    den = 0.0
    for yk, wk in zip(rule.nodes, rule.weights):
        s = math.sqrt(max(rho0 * rho0 - yk * yk, 0.0))
        if s == 0.0:
            continue
        pts = np.stack([s * gx, np.full_like(gx, yk)], axis=-1)
        num += wk * float(np.sum(gw * s * u(pts, t_bot)))
        den += wk * 2.0 * s
    if den <= 0.0:
        raise RuntimeError("empty bottom slice")
    avg = num / den
    origin = SpaceTimePoint(x_prime=(0.0,) * (params.n - 1), x=0.0, t=0.0)
    sample = heat_ball_sample(HeatBall(origin, 0.75 * r, params), density)
    vals = np.array(
        [float(u(sample.spatial[i : i + 1], sample.times[i])[0]) for i in range(len(sample.times))]
    )
    inf_val = float(np.min(vals))
    if inf_val <= 0.0 and avg > 0.0:
        raise RuntimeError("interior infimum vanished with positive average")
    return HarnackReport(
        r=r,
        bottom_average=float(avg),
        interior_inf=inf_val,
        quotient=float(avg / inf_val) if inf_val != 0.0 else math.inf,
    )
