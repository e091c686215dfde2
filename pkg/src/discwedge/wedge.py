"""Wedges, generic edges and totally real graphs.

A wedge is cut out by m real functions, W = {phi_j < 0 for all j}, with
edge E = {phi_j = 0 for all j}. The shrunken wedge W_delta replaces phi_j
by phi_j - delta * sum_{l != j} phi_l. All geometry is local to the box
||z||_inf <= 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy.optimize import minimize

from .jets import RealPolynomial, to_complex, to_real

log = logging.getLogger(__name__)

WORKING_BOX = 1.0
MAX_DEGREE = 4


class GeometryError(ValueError):
    pass


class EdgeFunction(Protocol):
    def value(self, z) -> np.ndarray: ...

    def dz(self, z) -> np.ndarray: ...


def real_gradient(f: EdgeFunction, z) -> np.ndarray:
    d = f.dz(z)
    return np.concatenate([2.0 * d.real, -2.0 * d.imag], axis=-1)


@dataclass(frozen=True)
class EdgeSpec:
    n: int
    functions: tuple

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(self.functions))
        if self.m > self.n:
            raise GeometryError(f"codimension {self.m} exceeds dimension {self.n}")

    @property
    def m(self) -> int:
        return len(self.functions)

    def values(self, z) -> np.ndarray:
        """phi_j(z) stacked on the last axis, shape (..., m)."""
        return np.stack([f.value(z) for f in self.functions], axis=-1)

    def jacobian(self, z) -> np.ndarray:
        """Rows d phi_j / d z_k, shape (..., m, n)."""
        return np.stack([f.dz(z) for f in self.functions], axis=-2)


@dataclass(frozen=True)
class WedgeSpec:
    edge: EdgeSpec
    delta: float = 0.0

    def __post_init__(self):
        if self.delta < 0:
            raise GeometryError("shrink factor must be non-negative")


def in_wedge(w: WedgeSpec, z) -> np.ndarray:
    return np.all(w.edge.values(z) < 0, axis=-1)


def shrunken_values(w: WedgeSpec, z) -> np.ndarray:
    phi = w.edge.values(z)
    total = phi.sum(axis=-1, keepdims=True)
    return phi - w.delta * (total - phi)


def in_shrunken(w: WedgeSpec, z) -> np.ndarray:
    return np.all(shrunken_values(w, z) < 0, axis=-1)


def genericity_margin(e: EdgeSpec, z) -> np.ndarray:
    """Smallest singular value of the m x n matrix (d phi_j / d z_k)."""
    jac = e.jacobian(np.asarray(z, dtype=complex))
    if not np.all(np.isfinite(jac)):
        raise GeometryError("jet evaluation failed")
    sv = np.linalg.svd(jac, compute_uv=False)
    return sv[..., e.m - 1]


# ---------------------------------------------------------------------------
# distances


@dataclass
class DistanceResult:
    distance: float
    point: np.ndarray
    converged: bool


def _project(functions: Sequence[EdgeFunction], z0: np.ndarray, steps: int = 50) -> np.ndarray:
    """Gauss-Newton minimal-norm projection onto the common zero set."""
    p = to_real(z0)
    for _ in range(steps):
        zc = to_complex(p)
        g = np.array([float(f.value(zc)) for f in functions])
        if np.max(np.abs(g)) < 1e-14:
            break
        J = np.stack([real_gradient(f, zc) for f in functions])
        p = p - np.linalg.lstsq(J, g, rcond=None)[0]
        if not np.all(np.isfinite(p)):
            break
    return p


def distance_to_zero_set(
    z,
    functions: Sequence[EdgeFunction],
    rng: np.random.Generator,
    starts: int = 8,
    tol: float = 1e-10,
) -> DistanceResult:
    """dist(z, {f = 0 for all f}) by projected multistart local minimization."""
    z = np.asarray(z, dtype=complex)
    x = to_real(z)
    base = _project(functions, z)
    scale = max(float(np.linalg.norm(base - x)), 1e-3)
    seeds = [base] + [
        _project(functions, to_complex(x + scale * rng.standard_normal(x.shape)))
        for _ in range(starts - 1)
    ]

    def objective(p):
        d = p - x
        return float(d @ d), 2.0 * d

    cons = [
        {
            "type": "eq",
            "fun": (lambda p, f=f: float(f.value(to_complex(p)))),
            "jac": (lambda p, f=f: real_gradient(f, to_complex(p))),
        }
        for f in functions
    ]
    best = None
    for s in seeds:
        if not np.all(np.isfinite(s)):
            continue
        res = minimize(objective, s, jac=True, constraints=cons, method="SLSQP",
                       options={"ftol": tol * tol, "maxiter": 200})
        p = res.x
        feas = max(abs(float(f.value(to_complex(p)))) for f in functions)
        if feas > 1e-9:
            continue
        d = float(np.linalg.norm(p - x))
        if best is None or d < best.distance:
            best = DistanceResult(d, to_complex(p), True)
    if best is None:
        return DistanceResult(float("nan"), to_complex(base), False)
    return best


def distance_to_edge(e: EdgeSpec, z, rng, starts: int = 8) -> DistanceResult:
    return distance_to_zero_set(z, e.functions, rng, starts)


def distance_to_wedge_boundary(w: WedgeSpec, z, rng, starts: int = 8) -> DistanceResult:
    """dist(z, bW) for z in W: the nearest point of the complement lies on some {phi_j = 0}."""
    results = [distance_to_zero_set(z, [f], rng, starts) for f in w.edge.functions]
    ok = [r for r in results if r.converged]
    if not ok:
        return DistanceResult(float("nan"), np.asarray(z, dtype=complex), False)
    return min(ok, key=lambda r: r.distance)


def sample_shrunken(w: WedgeSpec, count: int, rng: np.random.Generator, radius: float = 0.5,
                    max_draws: int = 1_000_000) -> np.ndarray:
    """Uniform samples of W_delta within the box ||z||_inf <= radius."""
    n = w.edge.n
    out = []
    drawn = 0
    while sum(len(o) for o in out) < count:
        batch = max(4 * count, 256)
        pts = rng.uniform(-radius, radius, (batch, n)) + 1j * rng.uniform(-radius, radius, (batch, n))
        drawn += batch
        out.append(pts[in_shrunken(w, pts)])
        if drawn > max_draws:
            raise GeometryError("shrunken wedge too thin to sample")
    return np.concatenate(out)[:count]


@dataclass
class ComparabilityReport:
    constant: float
    ratios: np.ndarray
    points: np.ndarray
    failures: list = field(default_factory=list)


def dist_comparability(w: WedgeSpec, samples: int, seed: int, radius: float = 0.5,
                       starts: int = 8) -> ComparabilityReport:
    """Fit C with C^-1 dist(z, bW) <= dist(z, E) <= C dist(z, bW) on W_delta samples."""
    if w.delta <= 0:
        raise GeometryError("comparability requires a shrunken wedge (delta > 0)")
    rng = np.random.default_rng(seed)
    pts = sample_shrunken(w, samples, rng, radius)
    ratios = []
    kept = []
    failures = []
    for z in pts:
        de = distance_to_edge(w.edge, z, rng, starts)
        db = distance_to_wedge_boundary(w, z, rng, starts)
        if not (de.converged and db.converged) or db.distance <= 0 or de.distance <= 0:
            failures.append(z)
            log.warning("distance minimization failed at %s", z)
            continue
        ratios.append(max(de.distance / db.distance, db.distance / de.distance))
        kept.append(z)
    ratios = np.asarray(ratios)
    constant = float(ratios.max()) if ratios.size else float("nan")
    return ComparabilityReport(constant, ratios, np.asarray(kept), failures)


# ---------------------------------------------------------------------------
# totally real graphs x = r(x, y)


@dataclass(frozen=True)
class TotallyRealGraph:
    """Edge {x = r(x, y)} in C^n with polynomial components r_j."""

    n: int
    components: tuple
    name: str = "graph"
    box: float = WORKING_BOX

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) != self.n:
            raise GeometryError("need one component per coordinate")
        object.__setattr__(self, "components", comps)
        zero = np.zeros(self.n, dtype=complex)
        if any(abs(float(c.value(zero))) > 1e-14 for c in comps):
            raise GeometryError("graph must satisfy r(0) = 0")
        if any(np.max(np.abs(c.gradient(zero))) > 1e-14 for c in comps):
            raise GeometryError("graph must satisfy dr(0) = 0")

    @property
    def lipschitz_bound(self) -> float:
        """Certified sup-norm Lipschitz constant of r on the working box."""
        if not self.components:
            return 0.0
        return float(max(c.gradient_bound(self.box).sum() for c in self.components))

    @property
    def is_flat(self) -> bool:
        return all(c.coefficients.size == 0 or not np.any(c.coefficients) for c in self.components)

    def r(self, x, y) -> np.ndarray:
        """r(x, y) for arrays with the coordinate on the last axis."""
        z = np.asarray(x) + 1j * np.asarray(y)
        cache: dict = {}
        vals = []
        for c in self.components:
            if id(c) not in cache:
                cache[id(c)] = c.value(z)
            vals.append(cache[id(c)])
        return np.stack(vals, axis=-1)

    def jacobians(self, x, y):
        """(dr/dx, dr/dy), each shaped (..., n, n) with row index j."""
        z = np.asarray(x) + 1j * np.asarray(y)
        g = np.stack([c.gradient(z) for c in self.components], axis=-2)
        return g[..., : self.n], g[..., self.n :]

    def tangent_basis(self, x, y) -> np.ndarray:
        """Columns spanning T E at (x, y) in real coordinates, shape (2n, n)."""
        rx, ry = self.jacobians(np.asarray(x, float), np.asarray(y, float))
        dx = np.linalg.solve(np.eye(self.n) - rx, ry)
        return np.vstack([dx, np.eye(self.n)])

    def graph_point(self, y, iterations: int = 200) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        x = np.zeros_like(y)
        for _ in range(iterations):
            nxt = self.r(x, y)
            if np.max(np.abs(nxt - x)) < 1e-15:
                x = nxt
                break
            x = nxt
        return x

    def distances(self, z) -> np.ndarray:
        """dist(z, E) for points on the last axis, by batched Gauss-Newton over y."""
        z = np.asarray(z, dtype=complex)
        x0, y0 = z.real, z.imag
        if self.is_flat:
            return np.linalg.norm(x0, axis=-1)
        y = y0.copy()
        eye = np.eye(self.n)
        for _ in range(100):
            X = self.graph_point(y)
            rx, ry = self.jacobians(X, y)
            D = np.linalg.solve(eye - rx, ry)
            Dt = np.swapaxes(D, -1, -2)
            rhs = (Dt @ (x0 - X)[..., None])[..., 0] + (y0 - y)
            step = np.linalg.solve(Dt @ D + eye, rhs[..., None])[..., 0]
            y = y + step
            if np.max(np.abs(step)) < 1e-15:
                break
        X = self.graph_point(y)
        return np.sqrt(np.sum((x0 - X) ** 2, axis=-1) + np.sum((y0 - y) ** 2, axis=-1))

    def distance(self, z) -> float:
        """dist(z, E) minimized over the graph parametrization y -> (x(y), y)."""
        return float(self.distances(np.asarray(z, dtype=complex)))

    def edge_spec(self) -> EdgeSpec:
        funcs = [RealPolynomial.coordinate(self.n, j) + c.scale(-1.0) for j, c in enumerate(self.components)]
        return EdgeSpec(self.n, funcs)

    def to_json(self) -> dict:
        return {"n": self.n, "name": self.name, "components": [c.terms() for c in self.components]}


def flat_graph(n: int) -> TotallyRealGraph:
    return TotallyRealGraph(n, [RealPolynomial.zero(n) for _ in range(n)], name="flat")


def quadratic_graph(n: int, eps: float) -> TotallyRealGraph:
    """r_j(x, y) = eps * ||y||^2 for every j."""
    terms = []
    for k in range(n):
        e = [0] * (2 * n)
        e[n + k] = 2
        terms.append([eps, e])
    comp = RealPolynomial.from_terms(n, terms)
    return TotallyRealGraph(n, [comp] * n, name="perturbed-flat")


def flat_edge(n: int) -> EdgeSpec:
    return flat_graph(n).edge_spec()


# ---------------------------------------------------------------------------
# JSON ingestion


def graph_from_json(data: dict) -> TotallyRealGraph:
    kind = data.get("builtin", "polynomial")
    n = int(data["n"])
    if kind == "flat":
        return flat_graph(n)
    if kind == "perturbed-flat":
        return quadratic_graph(n, float(data.get("epsilon", 0.05)))
    if kind == "polynomial":
        comps = [RealPolynomial.from_terms(n, t) for t in data["components"]]
        return TotallyRealGraph(n, comps, name=data.get("name", "graph"))
    raise GeometryError(f"unknown graph kind {kind!r}")


def edge_from_json(data: dict) -> EdgeSpec:
    kind = data.get("builtin")
    if kind in ("flat", "perturbed-flat"):
        return graph_from_json(data).edge_spec()
    if kind == "tangent-bundle":
        from .domains import domain_from_json, tangent_bundle_edge

        dom = domain_from_json(data["domain"])
        return tangent_bundle_edge(dom, data.get("pivot"))
    if kind is not None:
        raise GeometryError(f"unknown edge built-in {kind!r}")
    n = int(data["n"])
    funcs = []
    for spec in data["functions"]:
        poly = RealPolynomial.from_terms(n, spec["terms"] if isinstance(spec, dict) else spec)
        if poly.degree > MAX_DEGREE:
            raise GeometryError(f"defining functions are limited to total degree {MAX_DEGREE}")
        funcs.append(poly)
    return EdgeSpec(n, funcs)


def wedge_from_json(data: dict) -> WedgeSpec:
    return WedgeSpec(edge_from_json(data["edge"]), float(data.get("delta", 0.0)))
