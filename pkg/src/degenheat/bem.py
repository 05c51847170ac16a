"""Dirichlet solver on space-time boxes via the double-layer potential.

The double-layer potential with density phi over the lateral boundary
is u(xi) = int_0^t int_{dQ} dGamma/dnu(Y) phi |y|^a dsigma dtau.  Its
interior boundary limit satisfies u = PV[phi] - phi/2, so the Dirichlet
density solves the Volterra fixed point phi = 2 PV[phi] - 2 g, which is
a contraction in a time-discounted sup norm.  Discretization: densities
piecewise constant per (face cell, time step), collocation at cell
centers and step endpoints.  The kernel matrix depends on observation
and source times only through the step lag, so it is assembled as
Toeplitz-in-time blocks; the lag-0 block integrates the time variable
on a graded mesh toward coincidence.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .geometry import BoxDomain
from .kernel import gamma_grad_y_vec, u_tilde, weighted_normal_limit_vec
from .params import KernelParams, SpaceTimePoint
from .quadrature import GradedTimeMesh, WeightedRule1D, _legendre_rule, weighted_rule

CONTRACTION_WINDOWS = 4.0


class AmbiguityWarning(UserWarning):
    """Probe point within mesh resolution of a corner or face."""


@dataclass
class BoundaryMesh:
    """Lateral-boundary cells of a box with per-cell quadrature.

    d_space cells per axis per face, n_steps uniform time steps.  The
    top face t = t1 carries no data (it is not part of the parabolic
    boundary).  Cells on faces normal to the weighted axis at y = 0 are
    flagged: their kernel is the weighted normal limit, which already
    carries the |y|^a factor.
    """

    box: BoxDomain
    params: KernelParams
    d_space: int = 8
    n_steps: int = 12
    quad_nodes: int = 6
    _blocks: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.box.n != self.params.n:
            raise ValueError("box dimension must match params.n")
        if self.d_space < 1 or self.n_steps < 1:
            raise ValueError("mesh must have at least one cell and step")
        self._build_cells()

    def _build_cells(self) -> None:
        n = self.box.n
        lo = np.asarray(self.box.lo)
        hi = np.asarray(self.box.hi)
        centers, axes, signs, limits = [], [], [], []
        nodes, wts, edges = [], [], []
        for axis, side, coord in self.box.faces():
            free = [i for i in range(n) if i != axis]
            cell_edges = [
                np.linspace(lo[i], hi[i], self.d_space + 1) for i in free
            ]
            on_plane = axis == n - 1 and coord == 0.0
            for idx in np.ndindex(*(self.d_space,) * len(free)):
                c = np.empty(n)
                c[axis] = coord
                rules = []
                for j, i in enumerate(free):
                    e0, e1 = cell_edges[j][idx[j]], cell_edges[j][idx[j] + 1]
                    c[i] = 0.5 * (e0 + e1)
                    if i == n - 1:
                        rules.append(
                            weighted_rule(e0, e1, self.params.a, self.quad_nodes)
                        )
                    else:
                        x, w = _legendre_rule(self.quad_nodes)
                        rules.append(
                            WeightedRule1D(
                                e0 + (e1 - e0) * (x + 1.0) / 2.0,
                                w * (e1 - e0) / 2.0,
                                0.0,
                                (e0, e1),
                            )
                        )
                grids = np.meshgrid(*[r.nodes for r in rules], indexing="ij")
                wgrids = np.meshgrid(*[r.weights for r in rules], indexing="ij")
                q = grids[0].size
                pts = np.empty((q, n))
                pts[:, axis] = coord
                weight = np.ones(q)
                for g, wg, i in zip(grids, wgrids, free):
                    pts[:, i] = g.ravel()
                    weight *= wg.ravel()
                if axis == n - 1 and not on_plane:
                    weight *= abs(coord) ** self.params.a
                centers.append(c)
                axes.append(axis)
                signs.append(-1.0 if side == 0 else 1.0)
                limits.append(on_plane)
                nodes.append(pts)
                wts.append(weight)
                edges.append(
                    [
                        (i, float(cell_edges[j][idx[j]]), float(cell_edges[j][idx[j] + 1]))
                        for j, i in enumerate(free)
                    ]
                )
        self.centers = np.array(centers)
        self.normal_axis = np.array(axes, dtype=int)
        self.normal_sign = np.array(signs)
        self.use_limit = np.array(limits, dtype=bool)
        self.src_nodes = np.array(nodes)
        self.src_weights = np.array(wts)
        self.cell_edges = edges
        self.ht = (self.box.t1 - self.box.t0) / self.n_steps
        # midpoint collocation: first-order densities see a second-order
        # consistent right-hand side
        self.step_times = self.box.t0 + self.ht * (np.arange(self.n_steps) + 0.5)

    @property
    def n_cells(self) -> int:
        return len(self.centers)

    def _rows_generic(
        self,
        obs_sp: np.ndarray,
        dts: np.ndarray,
        src: np.ndarray,
        weights: np.ndarray,
        axes_rep: np.ndarray,
        signs_rep: np.ndarray,
        limit_rep: np.ndarray,
    ) -> np.ndarray:
        """Weighted double-layer kernel at arbitrary source nodes.

        obs_sp (p, n), src (s, n); returns (p, k, s) with quadrature
        weights folded in (the |y|^a surface weight lives in the
        weights, or in the limit kernel for y = 0 faces).
        """
        n = src.shape[-1]
        obs = obs_sp[:, None, None, :]
        dt = dts[None, :, None]
        grad = gamma_grad_y_vec(self.params, obs, 0.0, src[None, None, :, :], -dt)
        onehot = (np.arange(n)[None, :] == axes_rep[:, None]).astype(float)
        comp = np.einsum("pksn,sn->pks", grad, onehot)
        if np.any(limit_rep):
            diff = obs[..., :-1] - src[None, None, :, :-1]
            dist2_rest = np.sum(diff * diff, axis=-1)
            lim = weighted_normal_limit_vec(
                self.params,
                np.broadcast_to(obs[..., -1], comp.shape),
                np.broadcast_to(dt, comp.shape),
                dist2_rest,
            )
            comp = np.where(limit_rep[None, None, :], lim, comp)
        return comp * (signs_rep * weights)[None, None, :]

    def _kernel_rows(self, obs_sp: np.ndarray, dts: np.ndarray) -> np.ndarray:
        """Standard per-cell quadrature rows, shape (p, k, cells, q)."""
        m, q, n = self.src_nodes.shape
        rows = self._rows_generic(
            obs_sp,
            dts,
            self.src_nodes.reshape(m * q, n),
            self.src_weights.reshape(-1),
            np.repeat(self.normal_axis, q),
            np.repeat(self.normal_sign, q),
            np.repeat(self.use_limit, q),
        )
        return rows.reshape(obs_sp.shape[0], len(dts), m, q)

    def _refined_cell_nodes(
        self, idx: int, obs_sp: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Graded in-face quadrature of one cell toward the observation foot.

        Used for nearly singular evaluation close to the boundary; the
        panels shrink geometrically toward the projection of the
        observation point onto the cell.
        """
        n = self.box.n
        axis = self.normal_axis[idx]
        coord = self.centers[idx][axis]
        perp = abs(obs_sp[axis] - coord)
        rules_nodes, rules_wts = [], []
        for i, e0, e1 in self.cell_edges[idx]:
            f = min(max(obs_sp[i], e0), e1)
            scale = max(perp, 1e-4 * (e1 - e0))
            aexp = self.params.a if (i == n - 1 and not self.use_limit[idx]) else 0.0
            ns, ws = [], []
            for lo, hi, sign in ((e0, f, 1.0), (f, e1, -1.0)):
                span = hi - lo
                if span <= 0.0:
                    continue
                levels = max(1, min(40, int(math.ceil(math.log2(span / scale))) + 2))
                bps = [f - sign * span * 0.5 ** j for j in range(levels)]
                bps.append(f)
                for p0, p1 in zip(bps, bps[1:]):
                    lo_p, hi_p = min(p0, p1), max(p0, p1)
                    if hi_p <= lo_p:
                        continue
                    r = weighted_rule(lo_p, hi_p, aexp, 6) if aexp != 0.0 else None
                    if r is None:
                        x, w = _legendre_rule(6)
                        ns.append(lo_p + (hi_p - lo_p) * (x + 1.0) / 2.0)
                        ws.append(w * (hi_p - lo_p) / 2.0)
                    else:
                        ns.append(r.nodes)
                        ws.append(r.weights)
            rules_nodes.append(np.concatenate(ns))
            rules_wts.append(np.concatenate(ws))
        grids = np.meshgrid(*rules_nodes, indexing="ij")
        wgrids = np.meshgrid(*rules_wts, indexing="ij")
        s = grids[0].size
        pts = np.empty((s, n))
        pts[:, axis] = coord
        weight = np.ones(s)
        for g, wg, (i, _, _) in zip(grids, wgrids, self.cell_edges[idx]):
            pts[:, i] = g.ravel()
            weight *= wg.ravel()
        if axis == n - 1 and not self.use_limit[idx]:
            weight *= abs(coord) ** self.params.a
        return pts, weight

    def _near_cells(self, obs_sp: np.ndarray) -> list[int]:
        """Cells whose face region lies within a cell diameter of obs."""
        out = []
        for idx in range(self.n_cells):
            axis = self.normal_axis[idx]
            coord = self.centers[idx][axis]
            d2 = (obs_sp[axis] - coord) ** 2
            diam2 = 0.0
            for i, e0, e1 in self.cell_edges[idx]:
                gap = max(e0 - obs_sp[i], obs_sp[i] - e1, 0.0)
                d2 += gap * gap
                diam2 += (e1 - e0) ** 2
            if d2 < diam2:
                out.append(idx)
        return out

    def _delta_rule(self, d_lo: float, d_hi: float, m: int = 8) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature in the time offset; graded when the interval touches 0."""
        if d_lo <= 1e-14 * self.ht:
            mesh = GradedTimeMesh(-d_hi, 0.0, levels=24, ratio=0.5)
            x, w = _legendre_rule(m)
            ns, ws = [], []
            for p0, p1 in mesh.panels():
                ns.append(-(p0 + (p1 - p0) * (x + 1.0) / 2.0))
                ws.append(w * (p1 - p0) / 2.0)
            return np.concatenate(ns), np.concatenate(ws)
        x, w = _legendre_rule(m)
        return (
            d_lo + (d_hi - d_lo) * (x + 1.0) / 2.0,
            w * (d_hi - d_lo) / 2.0,
        )

    def block(self, lag: int) -> np.ndarray:
        """Kernel block for time lag: (obs cells) x (src cells).

        Entry = int over the lag's time-offset window and the source
        cell of the weighted double-layer kernel.
        """
        if lag in self._blocks:
            return self._blocks[lag]
        # collocation at step midpoints: lag-0 sees only the half step
        # before the collocation time
        d_lo = max(lag - 0.5, 0.0) * self.ht
        d_nodes, d_wts = self._delta_rule(d_lo, (lag + 0.5) * self.ht)
        rows = self._kernel_rows(self.centers, d_nodes)
        blockmat = np.einsum("pkmq,k->pm", rows, d_wts)
        self._blocks[lag] = blockmat
        return blockmat


@dataclass(frozen=True)
class BoundaryDensity:
    """Piecewise-constant density: values[k, c] on step k+1, cell c."""

    mesh: BoundaryMesh
    values: np.ndarray

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.values)):
            raise ValueError("density values must be finite")


def dl_kernel_entry(
    params: KernelParams,
    obs: SpaceTimePoint,
    src_spatial,
    src_t: float,
    normal_axis: int,
    normal_sign: float,
) -> float:
    """Pointwise weighted double-layer kernel dGamma/dnu(Y) |y|^a.

    On cells of a face lying on the degeneracy plane (normal along the
    weighted axis, y = 0) the weighted-limit kernel is used; it already
    contains the |y|^a factor.
    """
    src_spatial = np.asarray(src_spatial, dtype=float)
    dt = obs.t - src_t
    if dt <= 0.0:
        return 0.0
    y = src_spatial[-1]
    if normal_axis == params.n - 1 and y == 0.0:
        diff = obs.spatial[:-1] - src_spatial[:-1]
        lim = weighted_normal_limit_vec(
            params, obs.x, dt, float(np.sum(diff * diff))
        )
        return float(normal_sign * lim)
    grad = gamma_grad_y_vec(params, obs.spatial, obs.t, src_spatial, src_t)
    return float(normal_sign * grad[..., normal_axis] * abs(y) ** params.a)


def double_layer_eval(mesh: BoundaryMesh, phi: BoundaryDensity, xi: SpaceTimePoint) -> float:
    """Evaluate the double-layer potential of phi at an off-boundary point.

    Cells within a cell diameter of the observation point are nearly
    singular and get a locally graded in-face quadrature.
    """
    t = xi.t
    near = mesh._near_cells(xi.spatial)
    near_quads = {idx: mesh._refined_cell_nodes(idx, xi.spatial) for idx in near}
    total = 0.0
    for k in range(mesh.n_steps):
        tau0 = mesh.box.t0 + k * mesh.ht
        tau1 = tau0 + mesh.ht
        if tau0 >= t:
            break
        d_lo = max(t - min(tau1, t), 0.0)
        d_hi = t - tau0
        if d_hi <= 0.0:
            continue
        d_nodes, d_wts = mesh._delta_rule(d_lo, d_hi)
        rows = mesh._kernel_rows(xi.spatial[None, :], d_nodes)
        cell_vals = np.einsum("kmq,k->m", rows[0], d_wts)
        for idx, (pts, wts) in near_quads.items():
            s = len(wts)
            r = mesh._rows_generic(
                xi.spatial[None, :],
                d_nodes,
                pts,
                wts,
                np.full(s, mesh.normal_axis[idx]),
                np.full(s, mesh.normal_sign[idx]),
                np.full(s, mesh.use_limit[idx]),
            )
            cell_vals[idx] = float(np.einsum("ks,k->", r[0], d_wts))
        total += float(np.dot(cell_vals, phi.values[k]))
    return total


def _weighted_sup(mesh: BoundaryMesh, values: np.ndarray) -> float:
    """Sup norm discounted in time, exp(-4 (t - t0)/window)."""
    window = (mesh.box.t1 - mesh.box.t0) / CONTRACTION_WINDOWS
    disc = np.exp(-4.0 * (mesh.step_times - mesh.box.t0) / window)
    return float(np.max(disc[:, None] * np.abs(values)))


def _apply_volterra(mesh: BoundaryMesh, values: np.ndarray) -> np.ndarray:
    """W[phi] at all collocation points using the Toeplitz lag blocks."""
    out = np.zeros_like(values)
    for i in range(mesh.n_steps):
        acc = np.zeros(mesh.n_cells)
        for k in range(i + 1):
            acc += mesh.block(i - k) @ values[k]
        out[i] = acc
    return out


def solve_density(
    mesh: BoundaryMesh,
    g: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 400,
    method: str = "march",
) -> tuple[BoundaryDensity, dict]:
    """Solve phi = 2 W[phi] - 2 g at the collocation points.

    g has shape (n_steps, n_cells) and must vanish at the initial time
    by construction of the boundary split.  method 'march' does block
    forward substitution in time with inner Picard per block (same
    fixed point as the global iteration, far fewer kernel sweeps);
    'picard' iterates globally and reports the contraction ratio in
    the time-discounted sup norm.
    """
    g = np.asarray(g, dtype=float)
    if g.shape != (mesh.n_steps, mesh.n_cells):
        raise ValueError("boundary data shape must be (n_steps, n_cells)")
    info: dict = {"method": method, "ratios": []}
    if method == "march":
        phi = np.zeros_like(g)
        B0 = mesh.block(0)
        for i in range(mesh.n_steps):
            acc = np.zeros(mesh.n_cells)
            for k in range(i):
                acc += mesh.block(i - k) @ phi[k]
            c = 2.0 * acc - 2.0 * g[i]
            cur = c.copy()
            for _ in range(200):
                new = 2.0 * (B0 @ cur) + c
                step = np.max(np.abs(new - cur))
                cur = new
                if step < tol:
                    break
            else:
                raise RuntimeError("inner Picard stalled; mesh too coarse in time")
            phi[i] = cur
    elif method == "picard":
        phi = -2.0 * g
        prev_step = None
        bad = 0
        for it in range(max_iter):
            new = 2.0 * _apply_volterra(mesh, phi) - 2.0 * g
            step = _weighted_sup(mesh, new - phi)
            if prev_step is not None and prev_step > 0.0:
                ratio = step / prev_step
                info["ratios"].append(ratio)
                bad = bad + 1 if ratio >= 1.0 else 0
                if bad >= 5:
                    raise RuntimeError(
                        "Picard iteration not contracting; mesh too coarse"
                    )
            prev_step = step
            phi = new
            if step < tol:
                break
        else:
            raise RuntimeError("Picard iteration did not converge")
        info["iterations"] = it + 1
    else:
        raise ValueError("method must be 'march' or 'picard'")
    residual = 2.0 * _apply_volterra(mesh, phi) - 2.0 * g - phi
    info["residual"] = float(np.max(np.abs(residual)))
    return BoundaryDensity(mesh, phi), info


def initial_lift(
    params: KernelParams, box: BoxDomain, f0, xi: SpaceTimePoint, m: int = 32
) -> float:
    """v(X,t) = int_Q Gamma(X,t;Y,t0) f0(Y) |y|^a dY (kernel convolution).

    f0 maps an (p, n) array of spatial points to p values.
    """
    dt = xi.t - box.t0
    if dt <= 0.0:
        return 0.0
    rules = []
    for i in range(box.n):
        aexp = params.a if i == box.n - 1 else 0.0
        rules.append(weighted_rule(box.lo[i], box.hi[i], aexp, m))
    grids = np.meshgrid(*[r.nodes for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r.weights for r in rules], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = np.ones(len(pts))
    for wg in wgrids:
        wts = wts * wg.ravel()
    # Gamma = product of 1-D kernels; the |y|^a weight is in the rule,
    # so multiply the unweighted kernel factors per axis
    vals = np.ones(len(pts))
    for i in range(box.n - 1):
        d = pts[:, i] - xi.spatial[i]
        vals *= np.exp(-d * d / (4.0 * dt)) / math.sqrt(4.0 * math.pi * dt)
    vals *= u_tilde(params, xi.x, pts[:, -1], dt)
    return float(np.sum(wts * vals * np.asarray(f0(pts), dtype=float)))


@dataclass(frozen=True)
class DirichletSolution:
    """Evaluator u = offset + initial lift + double layer of the density.

    The constant offset is split off the data before the solve:
    constants are exact solutions, so removing one costs nothing and
    makes constant data reproduce to round-off.
    """

    mesh: BoundaryMesh
    density: BoundaryDensity
    f0: object
    offset: float
    info: dict
    lift_nodes: int = 32

    def __call__(self, xi: SpaceTimePoint) -> float:
        v = initial_lift(
            self.mesh.params, self.mesh.box, self.f0, xi, m=self.lift_nodes
        )
        return self.offset + v + double_layer_eval(self.mesh, self.density, xi)


def solve_dirichlet(
    params: KernelParams,
    box: BoxDomain,
    f,
    d_space: int = 8,
    n_steps: int = 12,
    tol: float = 1e-10,
    method: str = "march",
) -> DirichletSolution:
    """Dirichlet problem with data f on the parabolic boundary.

    f maps ((p, n) spatial array, time) to p values.  The initial part
    is lifted by the kernel convolution; the lateral remainder g (which
    vanishes at t0) is solved by the density equation.
    """
    mesh = BoundaryMesh(box, params, d_space=d_space, n_steps=n_steps)
    offset = float(np.mean(np.asarray(f(mesh.centers, box.t0), dtype=float)))

    def f0(pts):
        return np.asarray(f(pts, box.t0), dtype=float) - offset

    g = np.empty((mesh.n_steps, mesh.n_cells))
    for i, t in enumerate(mesh.step_times):
        lifted = np.array(
            [
                initial_lift(params, box, f0, SpaceTimePoint.from_spatial(c, t))
                for c in mesh.centers
            ]
        )
        g[i] = np.asarray(f(mesh.centers, t), dtype=float) - offset - lifted
    density, info = solve_density(mesh, g, tol=tol, method=method)
    return DirichletSolution(mesh, density, f0, offset, info)


def u0_identity(
    params: KernelParams,
    box: BoxDomain,
    xi: SpaceTimePoint,
    tol: float = 1e-6,
    eps: float | None = None,
    resolution: float = 0.0,
) -> float:
    """Constant-density double-layer value via the volume identity.

    u0(xi) = -lim_{e->0} int_Q Gamma(X,t;Y,t-e)|y|^a dY, which factors
    per axis: closed-form error functions on the free axes and a 1-D
    weighted quadrature on the weighted axis.  Returns -1 inside,
    -1/2 on faces, -1/4 at corners (including initial-time junctions),
    0 outside.
    """
    if xi.t < box.t0 or xi.t > box.t1:
        return 0.0
    time_factor = 0.5 if xi.t == box.t0 else 1.0
    scale = max(h - l for l, h in zip(box.lo, box.hi))
    dists = []
    for i in range(box.n):
        for c in (box.lo[i], box.hi[i]):
            d = abs(xi.spatial[i] - c)
            if d > 0.0:
                dists.append(d)
            if resolution > 0.0 and 0.0 < d < resolution:
                warnings.warn(
                    f"probe within resolution {resolution} of a face",
                    AmbiguityWarning,
                )
    dmin = min(dists) if dists else scale
    if eps is None:
        eps = min((dmin / 13.0) ** 2, (1e-3 * scale) ** 2)
    prod = time_factor
    for i in range(box.n - 1):
        x = xi.spatial[i]
        s = 2.0 * math.sqrt(eps)
        prod *= 0.5 * (erf((box.hi[i] - x) / s) - erf((box.lo[i] - x) / s))
    # weighted axis: restrict to the kernel's support window
    w = 9.0 * math.sqrt(2.0 * eps)
    lo = max(box.lo[-1], xi.x - w)
    hi = min(box.hi[-1], xi.x + w)
    if lo >= hi:
        return 0.0
    rule = weighted_rule(lo, hi, params.a, 48)
    vals = u_tilde(params, xi.x, rule.nodes, eps)
    prod *= float(np.sum(rule.weights * vals))
    return -prod


def green_function_box(
    params: KernelParams,
    box: BoxDomain,
    xi: SpaceTimePoint,
    zeta: SpaceTimePoint,
    d_space: int = 8,
    n_steps: int = 12,
) -> float:
    """Green function of the box: Gamma minus the lifted boundary data.

    zeta must lie inside the box strictly after t0 so that its trace on
    the parabolic boundary is continuous.
    """
    if xi.t <= zeta.t:
        return 0.0
    if not box.contains(zeta):
        raise ValueError("pole must lie inside the box")
    from .kernel import gamma_fs, gamma_fs_vec

    def f(pts, t):
        return gamma_fs_vec(params, pts, t, zeta.spatial, zeta.t)

    sol = solve_dirichlet(params, box, f, d_space=d_space, n_steps=n_steps)
    return gamma_fs(params, xi, zeta) - sol(xi)
