"""Analytic discs attached to a totally real graph along the upper semicircle.

The boundary data u of a disc solves the generalized Bishop equation

    u = r(u, T(u) + c) + t * psi        on the unit circle,

where psi vanishes on the closed upper semicircle and is negative on the
open lower one. The disc is the holomorphic extension of u + i(T(u) + c).
The equation is solved by Picard iteration, batched over parameters.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .circle import (AnalyticDisc, CircleFunction, analytic_completion, grid, harmonic_extension_array,
                     hilbert_array)
from .jets import to_real
from .wedge import TotallyRealGraph, WedgeSpec, in_shrunken

log = logging.getLogger(__name__)

DIVERGED = "diverged"
ESCAPED = "escaped"
CONVERGED = "converged"


class BishopError(RuntimeError):
    pass


class BishopDivergence(BishopError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class DomainEscape(BishopError):
    pass


class DegenerateDisc(ValueError):
    pass


def bump(N: int) -> np.ndarray:
    """psi(e^{i theta}): 0 on [0, pi], -exp(-1/((theta - pi)(2 pi - theta))) on (pi, 2 pi)."""
    theta = grid(N)
    out = np.zeros(N)
    low = theta > np.pi
    out[low] = -np.exp(-1.0 / ((theta[low] - np.pi) * (2 * np.pi - theta[low])))
    return out


def upper_mask(N: int) -> np.ndarray:
    """Grid indices on the closed upper semicircle."""
    theta = grid(N)
    return theta <= np.pi + 1e-12


@dataclass(frozen=True)
class BishopProblem:
    graph: TotallyRealGraph
    c: np.ndarray
    t: np.ndarray
    N: int = 256
    tol: float = 1e-12
    max_iter: int = 100
    psi: np.ndarray | None = None

    def __post_init__(self):
        n = self.graph.n
        c = np.broadcast_to(np.asarray(self.c, dtype=float), (n,)).copy()
        t = np.broadcast_to(np.asarray(self.t, dtype=float), (n,)).copy()
        if np.any(t < 0):
            raise ValueError("t must be non-negative")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "t", t)
        psi = self.psi
        if psi is None:
            psi = np.tile(bump(self.N), (n, 1))
        psi = np.asarray(psi, dtype=float).reshape(n, self.N)
        up = upper_mask(self.N)
        if np.any(psi[:, up] != 0) or np.any(psi[:, ~up] >= 0):
            raise ValueError("psi must vanish on the upper semicircle and be negative below")
        object.__setattr__(self, "psi", psi)

    def with_params(self, c, t) -> "BishopProblem":
        return replace(self, c=np.asarray(c, float), t=np.asarray(t, float))


@dataclass
class BishopSolution:
    u: CircleFunction
    residual: float
    iterations: int
    history: list = field(default_factory=list)
    damping: float = 1.0


@dataclass
class _Batch:
    u: np.ndarray
    residual: np.ndarray
    iterations: np.ndarray
    status: np.ndarray
    history: list
    damping: np.ndarray


def _bishop_map(graph: TotallyRealGraph, u, c, tpsi):
    y = hilbert_array(u) + c[..., None]
    x = np.moveaxis(u, -2, -1)
    yy = np.moveaxis(y, -2, -1)
    return np.moveaxis(graph.r(x, yy), -1, -2) + tpsi, y


def _iterate(graph, psi, c, t, tol, max_iter, damping, u0=None) -> _Batch:
    P, n = c.shape
    N = psi.shape[-1]
    tpsi = t[:, :, None] * psi[None, :, :]
    u = np.zeros((P, n, N)) if u0 is None else np.array(u0, dtype=float)
    status = np.full(P, "", dtype=object)
    iters = np.zeros(P, dtype=int)
    resid = np.full(P, np.inf)
    history = []
    active = np.ones(P, dtype=bool)
    G, _ = _bishop_map(graph, u, c, tpsi)
    best = np.full(P, np.inf)
    worse = np.zeros(P, dtype=int)
    for k in range(1, max_iter + 1):
        u[active] = (1 - damping) * u[active] + damping * G[active]
        iters[active] = k
        G_new, y = _bishop_map(graph, u, c, tpsi)
        G = np.where(active[:, None, None], G_new, G)
        res = np.max(np.abs(u - G), axis=(1, 2))
        resid[active] = res[active]
        history.append(resid.copy())
        box = graph.box
        escaped = active & ((np.max(np.abs(u), axis=(1, 2)) > box) | (np.max(np.abs(y), axis=(1, 2)) > box))
        status[escaped] = ESCAPED
        active &= ~escaped
        bad = active & ~np.isfinite(res)
        worse = np.where(res < best, 0, worse + 1)
        best = np.minimum(best, res)
        bad |= active & (worse >= 5)
        status[bad] = DIVERGED
        active &= ~bad
        done = active & (res <= tol)
        status[done] = CONVERGED
        active &= ~done
        if not active.any():
            break
    status[active] = DIVERGED
    return _Batch(u, resid, iters, status, history, np.full(P, damping))


def solve_batch(graph: TotallyRealGraph, psi, c, t, tol=1e-12, max_iter=100, u0=None) -> _Batch:
    """Picard iteration for many (c, t) at once; members that diverge are retried with damping 1/2."""
    c = np.atleast_2d(np.asarray(c, dtype=float))
    t = np.atleast_2d(np.asarray(t, dtype=float))
    if graph.lipschitz_bound >= 0.5:
        raise BishopError(f"graph Lipschitz bound {graph.lipschitz_bound:.3g} is not below 1/2")
    out = _iterate(graph, psi, c, t, tol, max_iter, 1.0, u0)
    retry = np.flatnonzero(out.status == DIVERGED)
    if retry.size:
        log.info("retrying %d members with damping 1/2", retry.size)
        sub = _iterate(graph, psi, c[retry], t[retry], tol, max_iter, 0.5,
                       None if u0 is None else np.asarray(u0)[retry])
        out.u[retry] = sub.u
        out.residual[retry] = sub.residual
        out.iterations[retry] = sub.iterations
        out.status[retry] = sub.status
        out.damping[retry] = 0.5
    return out


def solve_bishop(p: BishopProblem, u0=None) -> BishopSolution:
    b = solve_batch(p.graph, p.psi, p.c[None], p.t[None], p.tol, p.max_iter,
                    None if u0 is None else np.asarray(u0)[None])
    hist = [float(h[0]) for h in b.history]
    if b.status[0] == ESCAPED:
        raise DomainEscape("iterates left the working box")
    if b.status[0] != CONVERGED:
        raise BishopDivergence(f"no convergence, residual {b.residual[0]:.3g}", hist)
    return BishopSolution(CircleFunction(b.u[0]), float(b.residual[0]), int(b.iterations[0]), hist,
                          float(b.damping[0]))


def bishop_residual(graph: TotallyRealGraph, psi, u, c, t) -> float:
    """sup |u - r(u, T(u) + c) - t psi| by direct substitution."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    c = np.asarray(c, dtype=float)
    y = hilbert_array(u) + c[:, None]
    rr = graph.r(u.T, y.T).T
    return float(np.max(np.abs(u - rr - np.asarray(t, float)[:, None] * psi)))


def attached_disc(p: BishopProblem, solution: BishopSolution | None = None) -> AnalyticDisc:
    sol = solve_bishop(p) if solution is None else solution
    return analytic_completion(sol.u, p.c)


def attachment_residual(d: AnalyticDisc, g: TotallyRealGraph) -> float:
    """sup over upper-semicircle samples of ||x - r(x, y)||."""
    tr = d.trace
    if tr.shape[0] != g.n:
        raise ValueError("disc and graph dimensions differ")
    up = upper_mask(tr.shape[-1])
    x = tr.real[:, up].T
    y = tr.imag[:, up].T
    return float(np.max(np.linalg.norm(x - g.r(x, y), axis=-1)))


def transversality_margin(d: AnalyticDisc, g: TotallyRealGraph, theta: float) -> float:
    """Angle between the radial derivative of the disc at e^{i theta} and T E.

    A positive angle certifies that the disc leaves E transversally there.
    """
    if not 0.0 < theta < np.pi:
        raise ValueError("theta must be interior to the upper semicircle")
    e = np.exp(1j * theta)
    a = d.coefficients()
    k = np.arange(a.shape[-1])
    point = a @ (e ** k)
    radial = e * d.derivative(e)
    v = to_real(radial)
    norm = np.linalg.norm(v)
    if norm < 1e-10:
        raise DegenerateDisc("disc differential vanishes")
    q, _ = np.linalg.qr(g.tangent_basis(point.real, point.imag))
    cos = min(1.0, float(np.linalg.norm(q.T @ v)) / norm)
    return float(np.arccos(cos))


# ---------------------------------------------------------------------------
# families


@dataclass
class DiscFamily:
    """Solved discs on a parameter grid params = origin + coords @ basis.

    ``params`` rows are (c_1..c_n, t_1..t_n).
    """

    template: BishopProblem
    origin: np.ndarray
    basis: np.ndarray
    axes: list
    params: np.ndarray
    u: np.ndarray
    residual: np.ndarray
    iterations: np.ndarray
    status: np.ndarray

    @property
    def n(self) -> int:
        return self.template.graph.n

    @property
    def size(self) -> int:
        return self.params.shape[0]

    @property
    def spacing(self) -> np.ndarray:
        return np.array([ax[1] - ax[0] if len(ax) > 1 else np.inf for ax in self.axes])

    def c(self, k: int) -> np.ndarray:
        return self.params[k, : self.n]

    def t(self, k: int) -> np.ndarray:
        return self.params[k, self.n :]

    def traces(self) -> np.ndarray:
        y = hilbert_array(self.u) + self.params[:, : self.n, None]
        return self.u + 1j * y

    def member(self, k: int) -> AnalyticDisc:
        u = self.u[k]
        return AnalyticDisc(CircleFunction(u + 1j * (hilbert_array(u) + self.c(k)[:, None])))

    def evaluate(self, zeta) -> np.ndarray:
        """h_k(zeta) for every member; shape (members, *zeta.shape, n)."""
        vals = harmonic_extension_array(self.traces(), zeta)
        return np.moveaxis(vals, 1, -1)

    def centers(self) -> np.ndarray:
        return self.traces().mean(axis=-1)


def parameter_grid(n: int, points: int = 9, c_range: float = 0.3, t_range=(0.0, 0.3)):
    """Uniform (c, t) grid over |c_j| <= c_range, t_j in t_range."""
    caxis = np.linspace(-c_range, c_range, points)
    taxis = np.linspace(t_range[0], t_range[1], points)
    axes = [caxis] * n + [taxis] * n
    return np.zeros(2 * n), np.eye(2 * n), axes


def transversal_grid(t0, points: int = 9, c_range: float = 0.3):
    """Grid with t fixed at t0 and c ranging over the orthogonal complement of t0."""
    t0 = np.asarray(t0, dtype=float)
    n = t0.size
    u, _, _ = np.linalg.svd(t0.reshape(n, 1))
    perp = u[:, 1:].T  # (n-1, n)
    basis = np.hstack([perp, np.zeros((n - 1, n))])
    origin = np.concatenate([np.zeros(n), t0])
    axes = [np.linspace(-c_range, c_range, points)] * (n - 1)
    return origin, basis, axes


def solve_family(template: BishopProblem, origin, basis, axes, coords=None) -> DiscFamily:
    origin = np.asarray(origin, float)
    basis = np.atleast_2d(np.asarray(basis, float))
    if coords is None:
        coords = np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, len(axes))
    params = origin + coords @ basis
    n = template.graph.n
    if np.any(params[:, n:] < 0):
        raise ValueError("family parameters need t >= 0")
    b = solve_batch(template.graph, template.psi, params[:, :n], params[:, n:], template.tol,
                    template.max_iter)
    failed = np.flatnonzero(b.status != CONVERGED)
    if failed.size:
        raise BishopDivergence(f"{failed.size} family members failed (first index {failed[0]})")
    return DiscFamily(template, origin, basis, [np.asarray(a, float) for a in axes], params, b.u,
                      b.residual, b.iterations, b.status)


def family_attachment_residuals(f: DiscFamily) -> np.ndarray:
    g = f.template.graph
    up = upper_mask(f.template.N)
    tr = f.traces()[:, :, up]
    x = np.moveaxis(tr.real, 1, -1)
    y = np.moveaxis(tr.imag, 1, -1)
    return np.max(np.linalg.norm(x - g.r(x, y), axis=-1), axis=-1)


# ---------------------------------------------------------------------------
# wedge filling


@dataclass
class FillReport:
    coverage: float
    success: np.ndarray
    samples: np.ndarray
    excluded: int
    solutions: list
    failures: list


def _disc_value(template: BishopProblem, params: np.ndarray, zeta: complex, u0=None):
    n = template.graph.n
    b = solve_batch(template.graph, template.psi, params[:, :n], params[:, n:], template.tol,
                    template.max_iter, u0)
    if np.any(b.status != CONVERGED):
        return None, b.u
    tr = b.u + 1j * (hilbert_array(b.u) + params[:, :n, None])
    vals = harmonic_extension_array(tr, np.asarray(zeta))
    return vals, b.u


def _invert(template, z, zeta, params, u0, step=1e-6, max_steps=40, target=1e-6, t_max=1.0):
    n = template.graph.n
    zr = to_real(z)
    q = np.concatenate([[zeta.real, zeta.imag], params])

    def split(q):
        return complex(q[0], q[1]), q[2:]

    def admissible(q):
        zz, pp = split(q)
        return abs(zz) < 1 - 1e-9 and np.all(pp[n:] >= 0) and np.all(pp[n:] <= t_max) \
            and np.all(np.abs(pp[:n]) <= 1.0)

    vals, u0 = _disc_value(template, q[2:][None], complex(q[0], q[1]), u0)
    if vals is None:
        return False, q
    F = to_real(vals[0]) - zr
    for _ in range(max_steps):
        if np.linalg.norm(F) <= target:
            return True, q
        zz, pp = split(q)
        pert = np.repeat(pp[None], 2 * n, axis=0) + step * np.eye(2 * n)
        batch = np.vstack([pp[None], pert])
        ub = np.repeat(u0, batch.shape[0], axis=0)
        b = solve_batch(template.graph, template.psi, batch[:, :n], batch[:, n:], template.tol,
                        template.max_iter, ub)
        if np.any(b.status != CONVERGED):
            return False, q
        tr = b.u + 1j * (hilbert_array(b.u) + batch[:, :n, None])
        pts = np.array([zz, zz + step, zz + 1j * step])
        base = harmonic_extension_array(tr[0], pts)  # (n, 3)
        J = np.empty((2 * n, 2 + 2 * n))
        J[:, 0] = to_real((base[:, 1] - base[:, 0]) / step)
        J[:, 1] = to_real((base[:, 2] - base[:, 0]) / step)
        pv = harmonic_extension_array(tr[1:], np.asarray(zz))  # (2n, n)
        for j in range(2 * n):
            J[:, 2 + j] = to_real((pv[j] - base[:, 0]) / step)
        delta = -np.linalg.lstsq(J, F, rcond=None)[0]
        alpha = 1.0
        accepted = False
        u_base = b.u[:1]
        while alpha > 1e-4:
            trial = q + alpha * delta
            trial[2 + n:] = np.maximum(trial[2 + n:], 0.0)
            if admissible(trial):
                zt, pt = split(trial)
                vals, ut = _disc_value(template, pt[None], zt, u_base)
                if vals is not None:
                    Ft = to_real(vals[0]) - zr
                    if np.linalg.norm(Ft) < np.linalg.norm(F):
                        q, F, u0 = trial, Ft, ut
                        accepted = True
                        break
            alpha *= 0.5
        if not accepted:
            return False, q
    return bool(np.linalg.norm(F) <= target), q


def _zeta_table():
    radii = np.linspace(0.1, 0.97, 12)
    angles = np.linspace(0, 2 * np.pi, 32, endpoint=False)
    return np.concatenate([[0j], (radii[:, None] * np.exp(1j * angles[None, :])).ravel()])


def fill_wedge_check(f: DiscFamily, w: WedgeSpec, sample_count: int, seed: int, radius: float = 0.1,
                     points=None) -> FillReport:
    """Fraction of W_delta samples reached by some disc of the family.

    Each sample is inverted from the nearest tabulated (member, zeta) pair by
    damped Gauss-Newton on (zeta, c, t); success means ||h(zeta) - z|| <= 1e-6
    with |zeta| < 1.
    """
    if w.delta <= 0:
        raise ValueError("filling is checked on a shrunken wedge (delta > 0)")
    rng = np.random.default_rng(seed)
    if points is None:
        from .wedge import sample_shrunken

        pts = sample_shrunken(w, sample_count, rng, radius)
        excluded = 0
    else:
        pts = np.asarray(points, dtype=complex).reshape(-1, f.n)
        keep = in_shrunken(w, pts)
        excluded = int((~keep).sum())
        pts = pts[keep]
    zt = _zeta_table()
    table = f.evaluate(zt)  # (P, Z, n)
    P, Z, _ = table.shape
    tree = cKDTree(to_real(table.reshape(P * Z, -1)))
    success = np.zeros(len(pts), dtype=bool)
    solutions = []
    failures = []
    for i, z in enumerate(pts):
        _, idx = tree.query(to_real(z))
        k, j = divmod(int(idx), Z)
        ok, q = _invert(f.template, z, zt[j], f.params[k].copy(), f.u[k][None])
        success[i] = ok
        solutions.append(q)
        if not ok:
            failures.append(z)
            log.info("fill inversion failed at %s", z)
    coverage = float(success.mean()) if len(pts) else float("nan")
    return FillReport(coverage, success, pts, excluded, solutions, failures)


# ---------------------------------------------------------------------------
# foliation


@dataclass
class FoliationReport:
    multiplicity: np.ndarray
    tolerance: float

    @property
    def single_fraction(self) -> float:
        return float(np.mean(self.multiplicity == 1))

    @property
    def gaps(self) -> int:
        return int(np.sum(self.multiplicity == 0))

    @property
    def overlaps(self) -> int:
        return int(np.sum(self.multiplicity >= 2))


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from points p (S, d) to polylines with segments a->b (M, K, d); returns (S, M)."""
    ab = b - a
    denom = np.maximum(np.sum(ab * ab, axis=-1), 1e-300)
    out = np.empty((p.shape[0], a.shape[0]))
    for s, pt in enumerate(p):
        ap = pt - a
        lam = np.clip(np.sum(ap * ab, axis=-1) / denom, 0.0, 1.0)
        d = np.linalg.norm(ap - lam[..., None] * ab, axis=-1)
        out[s] = d.min(axis=-1)
    return out


def foliation_check(f: DiscFamily, edge_samples, tol: float | None = None) -> FoliationReport:
    """Count members whose boundary arc h(S+) passes within ``tol`` of each edge sample.

    The default tolerance is half the finest parameter spacing, so a family
    of disjoint arcs produces multiplicity 1 at every covered point.
    """
    pts = to_real(np.asarray(edge_samples, dtype=complex).reshape(-1, f.n))
    if tol is None:
        tol = 0.5 * float(np.min(f.spacing))
    up = upper_mask(f.template.N)
    arcs = to_real(np.moveaxis(f.traces()[:, :, up], 1, -1))  # (M, K, 2n)
    dist = _segment_distance(pts, arcs[:, :-1], arcs[:, 1:])
    return FoliationReport((dist <= tol).sum(axis=1), tol)


def sample_edge_points(f: DiscFamily, count: int, seed: int) -> np.ndarray:
    """Points of E on arcs of discs with random parameters inside the family hull."""
    rng = np.random.default_rng(seed)
    lo = np.array([a[0] + (a[1] - a[0] if len(a) > 1 else 0) for a in f.axes])
    hi = np.array([a[-1] - (a[1] - a[0] if len(a) > 1 else 0) for a in f.axes])
    coords = rng.uniform(lo, hi, (count, len(f.axes)))
    params = f.origin + coords @ f.basis
    N = f.template.N
    # grid angles strictly inside the upper semicircle, where the trace is exactly on E
    idx = rng.integers(1, N // 2, count)
    n = f.n
    b = solve_batch(f.template.graph, f.template.psi, params[:, :n], params[:, n:], f.template.tol,
                    f.template.max_iter)
    tr = b.u + 1j * (hilbert_array(b.u) + params[:, :n, None])
    return tr[np.arange(count), :, idx]


# ---------------------------------------------------------------------------
# center map


@dataclass
class CenterReport:
    quotients: list  # max |second difference| / h^2 per refinement level
    spacings: list
    bounded: bool


def center_map_smoothness(f: DiscFamily, levels: int = 2) -> CenterReport:
    """Second-difference quotients of (c, t) -> h(0) at spacing h, h/2, h/4."""
    shape = [len(a) for a in f.axes]
    if min(shape) < 3:
        raise ValueError("center map check needs at least 3 grid points per axis")
    centers = f.centers().reshape(shape + [f.n])
    h = f.spacing
    q0 = 0.0
    for ax in range(len(shape)):
        d2 = np.diff(centers, n=2, axis=ax) / h[ax] ** 2
        q0 = max(q0, float(np.max(np.abs(d2))))
    quotients = [q0]
    spacings = [float(np.min(h))]
    mid = np.array([a[len(a) // 2] for a in f.axes])
    n = f.n
    for level in range(1, levels + 1):
        qmax = 0.0
        for ax in range(len(shape)):
            step = h[ax] / 2 ** level
            coords = np.repeat(mid[None], 3, axis=0)
            coords[:, ax] += np.array([-step, 0.0, step])
            params = f.origin + coords @ f.basis
            params[:, n:] = np.maximum(params[:, n:], 0.0)
            b = solve_batch(f.template.graph, f.template.psi, params[:, :n], params[:, n:],
                            f.template.tol, f.template.max_iter)
            cen = (b.u + 1j * (hilbert_array(b.u) + params[:, :n, None])).mean(axis=-1)
            d2 = (cen[0] - 2 * cen[1] + cen[2]) / step ** 2
            qmax = max(qmax, float(np.max(np.abs(d2))))
        quotients.append(qmax)
        spacings.append(float(np.min(h)) / 2 ** level)
    finite = all(np.isfinite(quotients))
    bounded = finite and max(quotients[1:], default=0.0) <= 4.0 * quotients[0] + 1e-6
    return CenterReport(quotients, spacings, bool(bounded))
