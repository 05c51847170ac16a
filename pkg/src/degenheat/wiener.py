"""Wiener-series regularity tester and the exterior-ball barrier.

The series term at scale k is the discrete capacity of the complement
of the domain inside the Gamma-level shell A(xi0, lambda^k), scaled by
lambda^{-k(n+a)/2} (1 + x0^2/lambda^k)^{-a/2}.  Divergence of the
series marks the boundary point as regular; any finite-k verdict is
heuristic and the thresholds are surfaced in the report.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .capacity import capacity_lp
from .geometry import Shell, heat_ball_sample
from .params import KernelParams, SpaceTimePoint

TERM_FLOOR = 1e-12
TAIL_LEN = 5
DIV_FRACTION = 0.1
CONV_RATIO = 0.7
CONV_R2 = 0.9

_PRIMITIVE_TYPES = ("box", "half-space", "time-slab", "cusp")
_OPS = ("union", "intersect", "subtract")


def _primitive_mask(prim: dict, spatial: np.ndarray, times: np.ndarray) -> np.ndarray:
    kind = prim["type"]
    if kind == "box":
        lo = np.asarray(prim["lo"], dtype=float)
        hi = np.asarray(prim["hi"], dtype=float)
        t0, t1 = prim["t"]
        mask = (times > t0) & (times < t1)
        mask &= np.all((spatial > lo) & (spatial < hi), axis=-1)
    elif kind == "half-space":
        normal = np.asarray(prim["normal"], dtype=float)
        mask = spatial @ normal[:-1] + times * normal[-1] < prim["offset"]
    elif kind == "time-slab":
        t0, t1 = prim["t"]
        mask = (times > t0) & (times < t1)
    elif kind == "cusp":
        center = np.asarray(prim["center"], dtype=float)
        dt = center[-1] - times
        dist = np.linalg.norm(spatial - center[:-1], axis=-1)
        profile = prim["profile"]
        c = profile["params"][0]
        with np.errstate(divide="ignore", over="ignore"):
            if profile["kind"] == "power":
                rad = c * np.maximum(dt, 0.0) ** profile["params"][1]
            elif profile["kind"] == "exp":
                rad = c * np.exp(-profile["params"][1] / np.maximum(dt, 1e-300))
            else:
                raise ValueError(f"unknown cusp profile {profile['kind']!r}")
        mask = (dt > 0.0) & (dist < rad)
    else:
        raise ValueError(f"unknown primitive type {kind!r}")
    if prim.get("complement", False):
        mask = ~mask
    return mask


@dataclass(frozen=True)
class DomainDescriptor:
    """Open space-time set built from primitives folded left-to-right.

    ops[i] combines the running set with primitives[i + 1]; each
    primitive may carry a "complement" flag.  Membership uses strict
    inequalities throughout.
    """

    primitives: tuple
    ops: tuple = ()

    def __post_init__(self) -> None:
        if not self.primitives:
            raise ValueError("need at least one primitive")
        if len(self.ops) != len(self.primitives) - 1:
            raise ValueError("need exactly one op per extra primitive")
        for prim in self.primitives:
            if prim["type"] not in _PRIMITIVE_TYPES:
                raise ValueError(f"unknown primitive type {prim['type']!r}")
        for op in self.ops:
            if op not in _OPS:
                raise ValueError(f"unknown op {op!r}")

    def contains_vec(self, spatial, times) -> np.ndarray:
        spatial = np.atleast_2d(np.asarray(spatial, dtype=float))
        times = np.asarray(times, dtype=float)
        mask = _primitive_mask(self.primitives[0], spatial, times)
        for op, prim in zip(self.ops, self.primitives[1:]):
            other = _primitive_mask(prim, spatial, times)
            if op == "union":
                mask = mask | other
            elif op == "intersect":
                mask = mask & other
            else:
                mask = mask & ~other
        return mask

    def contains(self, zeta: SpaceTimePoint) -> bool:
        return bool(
            self.contains_vec(zeta.spatial[None, :], np.array([zeta.t]))[0]
        )

    def to_json(self) -> str:
        return json.dumps({"primitives": list(self.primitives), "ops": list(self.ops)})

    @classmethod
    def from_json(cls, text: str) -> "DomainDescriptor":
        data = json.loads(text)
        return cls(tuple(data["primitives"]), tuple(data.get("ops", ())))

    @classmethod
    def box(cls, lo, hi, t0: float, t1: float) -> "DomainDescriptor":
        return cls(({"type": "box", "lo": list(lo), "hi": list(hi), "t": [t0, t1]},))

    @classmethod
    def time_slab(cls, t0: float, t1: float) -> "DomainDescriptor":
        return cls(({"type": "time-slab", "t": [t0, t1]},))


def shell_weight(params: KernelParams, x0: float, lam: float, k: int) -> float:
    rk = lam**k
    return rk ** (-(params.n + params.a) / 2.0) * (1.0 + x0 * x0 / rk) ** (
        -params.a / 2.0
    )


def shell_term(
    params: KernelParams,
    xi0: SpaceTimePoint,
    lam: float,
    k: int,
    domain: DomainDescriptor,
    density: int = 10,
    tol: float = 1e-8,
) -> tuple[float, float]:
    """(capacity of the domain complement in shell k, weighted term)."""
    if k < 1:
        raise ValueError("shell index must be at least 1")
    if not 0.0 < lam < 1.0:
        raise ValueError("lambda must lie in (0, 1)")
    shell = Shell(xi0, lam, k, params)
    # the certified bounding box is loose for deep shells; densify the
    # lattice until the ball is actually hit
    dens = density
    for _ in range(4):
        try:
            sample = heat_ball_sample(shell.outer_ball(), dens)
            break
        except RuntimeError:
            dens *= 2
    else:
        raise RuntimeError("shell lattice stayed empty after densification")
    keep = shell.contains_vec(sample.spatial, sample.times)
    keep &= ~domain.contains_vec(sample.spatial, sample.times)
    if not np.any(keep):
        return 0.0, 0.0
    res = capacity_lp(
        params,
        sample.spatial[keep],
        sample.times[keep],
        sample.h_space,
        sample.h_time,
        tol=tol,
    )
    weight = shell_weight(params, xi0.x, lam, k)
    return res.cap_estimate, res.cap_estimate * weight


@dataclass(frozen=True)
class WienerReport:
    lam: float
    terms: list
    partial_sums: list
    verdict: str
    thresholds: dict
    lambda_sweep: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def classify_terms(terms) -> str:
    """Heuristic series verdict from finitely many weighted terms."""
    terms = np.asarray([t for t in terms], dtype=float)
    if len(terms) == 0 or np.all(terms < TERM_FLOOR):
        return "likely-irregular"
    theta_div = DIV_FRACTION * terms[0]
    tail = terms[-TAIL_LEN:]
    if np.mean(tail) >= theta_div:
        return "likely-regular"
    pos = terms > TERM_FLOOR
    ks = np.flatnonzero(pos)
    if np.sum(pos) >= 3:
        logs = np.log(terms[pos])
        slope, intercept = np.polyfit(ks, logs, 1)
        fit = slope * ks + intercept
        ss_res = float(np.sum((logs - fit) ** 2))
        ss_tot = float(np.sum((logs - np.mean(logs)) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        if math.exp(slope) <= CONV_RATIO and r2 >= CONV_R2:
            return "likely-irregular"
    return "inconclusive"


def _check_boundary_point(
    domain: DomainDescriptor, xi0: SpaceTimePoint, n: int
) -> None:
    if domain.contains(xi0):
        raise ValueError("point lies inside the domain, not on its boundary")
    rng = np.random.default_rng(0)
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        offs = rng.uniform(-eps, eps, (512, n + 1))
        hit = domain.contains_vec(
            np.asarray(xi0.spatial) + offs[:, :n], xi0.t + offs[:, n]
        )
        if not np.any(hit):
            raise ValueError("no domain points found near the probe; not a boundary point")


def wiener_series(
    params: KernelParams,
    xi0: SpaceTimePoint,
    domain: DomainDescriptor,
    lam: float = 0.5,
    k_max: int = 12,
    density: int = 10,
    tol: float = 1e-8,
    sweep: tuple = (),
) -> WienerReport:
    """Weighted shell capacities k = 1..k_max with a heuristic verdict.

    The sweep argument lists extra lambda values; their verdicts are
    reported alongside (the true series diverges for one lambda exactly
    when it diverges for all).
    """
    _check_boundary_point(domain, xi0, params.n)

    def run(lam_val: float):
        rows = []
        acc = 0.0
        sums = []
        for k in range(1, k_max + 1):
            cap, term = shell_term(params, xi0, lam_val, k, domain, density, tol)
            weight = shell_weight(params, xi0.x, lam_val, k)
            rows.append({"k": k, "cap": cap, "weight": weight, "term": term})
            acc += term
            sums.append(acc)
        return rows, sums

    rows, sums = run(lam)
    verdict = classify_terms([row["term"] for row in rows])
    sweep_verdicts = {}
    for lam_val in sweep:
        if lam_val == lam:
            sweep_verdicts[lam_val] = verdict
            continue
        srows, _ = run(lam_val)
        sweep_verdicts[lam_val] = classify_terms([row["term"] for row in srows])
    return WienerReport(
        lam=lam,
        terms=rows,
        partial_sums=sums,
        verdict=verdict,
        thresholds={
            "div_fraction": DIV_FRACTION,
            "tail_len": TAIL_LEN,
            "conv_ratio": CONV_RATIO,
            "conv_r2": CONV_R2,
            "term_floor": TERM_FLOOR,
        },
        lambda_sweep=sweep_verdicts,
    )


def exterior_ball_barrier(
    params: KernelParams, xi1: SpaceTimePoint, R1: float, j: float, xi: SpaceTimePoint
) -> float:
    """Barrier e^{-j R1^2} - e^{-j R^2} with R the space-time distance to xi1."""
    if not R1 > 0.0 or not j > 0.0:
        raise ValueError("ball radius and exponent must be positive")
    diff = np.append(
        np.asarray(xi.spatial) - np.asarray(xi1.spatial), xi.t - xi1.t
    )
    r2 = float(diff @ diff)
    return math.exp(-j * R1 * R1) - math.exp(-j * r2)


def barrier_certificate(
    params: KernelParams,
    xi1: SpaceTimePoint,
    R1: float,
    j: float,
    spatial,
    times,
    h: float = 1e-5,
    tol: float = 1e-5,
) -> dict:
    """Finite-difference supersolution check of the barrier.

    Evaluates -D_t w + Delta_X w + (a/x) D_x w at the samples by central
    differences, normalized by the 2 j e^{-j R^2} prefactor so the sign
    test is scale-free; the certificate passes when the maximum is
    below tol.  Samples on the degeneracy plane are rejected (the
    weighted first derivative vanishes there; the operator value is a
    one-sided limit).
    """
    spatial = np.atleast_2d(np.asarray(spatial, dtype=float))
    times = np.asarray(times, dtype=float)
    if np.any(spatial[:, -1] == 0.0):
        raise ValueError("certificate samples must avoid the degeneracy plane")

    def w(sp, t):
        diff = np.concatenate(
            [sp - np.asarray(xi1.spatial), (t - xi1.t)[:, None]], axis=-1
        )
        r2 = np.sum(diff * diff, axis=-1)
        return np.exp(-j * R1 * R1) - np.exp(-j * r2)

    base = w(spatial, times)
    val = -(w(spatial, times + h) - w(spatial, times - h)) / (2.0 * h)
    for axis in range(params.n):
        up = spatial.copy()
        dn = spatial.copy()
        up[:, axis] += h
        dn[:, axis] -= h
        val += (w(up, times) - 2.0 * base + w(dn, times)) / (h * h)
        if axis == params.n - 1:
            val += (
                params.a
                / spatial[:, axis]
                * (w(up, times) - w(dn, times))
                / (2.0 * h)
            )
    diff = np.concatenate(
        [spatial - np.asarray(xi1.spatial), (times - xi1.t)[:, None]], axis=-1
    )
    scale = 2.0 * j * np.exp(-j * np.sum(diff * diff, axis=-1))
    worst = float(np.max(val / scale))
    return {"max_operator_value": worst, "passes": worst <= tol}
