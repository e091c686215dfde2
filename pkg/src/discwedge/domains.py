"""Strictly pseudoconvex model domains {rho < 0} and their holomorphic tangent data."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .jets import RealPolynomial, to_complex, to_real
from .wedge import EdgeSpec


class DomainError(ValueError):
    pass


class DegenerateBoundary(DomainError):
    pass


@dataclass(frozen=True)
class DomainSpec:
    n: int
    rho: RealPolynomial
    kind: str = "polynomial"
    params: dict = field(default_factory=dict)

    def value(self, z):
        return self.rho.value(z)

    def dz(self, z):
        return self.rho.dz(z)

    def levi_matrix(self, z):
        return self.rho.levi_matrix(z)

    def hessian_zz(self, z):
        return self.rho.hessian_zz(z)

    def contains(self, z):
        return self.value(z) < 0

    @property
    def ball_radius(self) -> float | None:
        """Radius when the domain is a ball centred at the origin, else None."""
        if self.kind == "ball":
            return float(self.params.get("radius", 1.0))
        if self.kind == "ellipsoid":
            a = np.asarray(self.params["a"], dtype=float)
            if np.allclose(a, a[0], rtol=0, atol=0):
                return float(1.0 / np.sqrt(a[0]))
        return None

    def to_json(self) -> dict:
        out = {"kind": self.kind, "n": self.n}
        out.update(self.params)
        if self.kind in ("polynomial", "perturbed"):
            out["terms"] = self.rho.terms()
        return out


def ball(n: int, radius: float = 1.0) -> DomainSpec:
    rho = RealPolynomial.squared_modulus(n, 1.0) + RealPolynomial.constant(n, -radius ** 2)
    return DomainSpec(n, rho, "ball", {"radius": float(radius)})


def ellipsoid(a) -> DomainSpec:
    """sum_j a_j |z_j|^2 - 1 with a_j > 0."""
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise DomainError("ellipsoid weights must be positive")
    n = a.size
    rho = RealPolynomial.squared_modulus(n, a) + RealPolynomial.constant(n, -1.0)
    return DomainSpec(n, rho, "ellipsoid", {"a": a.tolist()})


def local_model(n: int = 2) -> DomainSpec:
    """rho = Re z_n + sum_{j<n} |z_j|^2 (unbounded, used near the origin)."""
    w = np.zeros(n)
    w[: n - 1] = 1.0
    rho = RealPolynomial.squared_modulus(n, w) + RealPolynomial.coordinate(n, n - 1)
    return DomainSpec(n, rho, "local-model", {})


def perturbed(base: DomainSpec, eps: float, q: RealPolynomial, samples: int = 64, seed: int = 0) -> DomainSpec:
    """base.rho + eps * q, accepted only when strictly pseudoconvex on boundary samples."""
    dom = DomainSpec(base.n, base.rho + q.scale(eps), "perturbed",
                     {"base": base.to_json(), "epsilon": float(eps)})
    margin = strict_psc_margin(dom, samples, seed)
    if not margin > 0:
        raise DomainError(f"perturbation destroys strict pseudoconvexity (margin {margin:.3g})")
    return dom


def domain_from_json(data: dict) -> DomainSpec:
    kind = data.get("kind")
    if kind == "ball":
        return ball(int(data["n"]), float(data.get("radius", 1.0)))
    if kind == "ellipsoid":
        return ellipsoid(data["a"])
    if kind == "local-model":
        return local_model(int(data.get("n", 2)))
    if kind == "perturbed":
        base = domain_from_json(data["base"])
        q = RealPolynomial.from_terms(base.n, data["q"])
        return perturbed(base, float(data["epsilon"]), q)
    if kind == "polynomial":
        n = int(data["n"])
        return DomainSpec(n, RealPolynomial.from_terms(n, data["terms"]))
    raise DomainError(f"unknown domain kind {kind!r}")


# ---------------------------------------------------------------------------
# boundary sampling


def project_to_boundary(d: DomainSpec, z, tol: float = 1e-12, steps: int = 60) -> np.ndarray:
    """Newton steps along the real gradient until |rho| <= tol."""
    p = to_real(np.atleast_2d(np.asarray(z, dtype=complex))).copy()
    for _ in range(steps):
        zc = to_complex(p)
        val = d.value(zc)
        if np.all(np.abs(val) <= tol):
            break
        g = d.rho.gradient(zc)
        gn = np.sum(g * g, axis=-1)
        if np.any(gn < 1e-24):
            raise DegenerateBoundary("vanishing gradient during boundary projection")
        p = p - (val / gn)[:, None] * g
    return to_complex(p)


def sample_boundary(d: DomainSpec, count: int, seed: int, center=None, scale: float = 1.0) -> np.ndarray:
    """Seeded boundary points: random starts around ``center`` projected onto {rho = 0}."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((count, d.n)) + 1j * rng.standard_normal((count, d.n))
    if d.kind == "local-model":
        starts = 0.1 * scale * g
    else:
        starts = scale * g / np.linalg.norm(g, axis=1, keepdims=True)
    if center is not None:
        starts = starts + np.asarray(center, dtype=complex)
    return project_to_boundary(d, starts)


# ---------------------------------------------------------------------------
# Levi form and holomorphic tangent spaces


def levi_form(d: DomainSpec, p, v) -> float:
    """L(rho, p, v) = sum_{j,k} rho_{z_j zbar_k}(p) v_j conj(v_k)."""
    L = d.levi_matrix(np.asarray(p, dtype=complex))
    v = np.asarray(v, dtype=complex)
    val = v @ L @ np.conj(v)
    if abs(val.imag) > 1e-12 * max(1.0, abs(val.real)):
        raise DomainError("Levi form is not real; jet is not conjugate symmetric")
    return float(val.real)


@dataclass(frozen=True)
class Hyperplane:
    """Complex hyperplane {v : sum_j a_j v_j = 0} with unit homogeneous normal a."""

    normal: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.normal, dtype=complex).reshape(-1)
        nrm = np.linalg.norm(a)
        if nrm < 1e-10:
            raise DomainError("hyperplane normal vanishes")
        a = a / nrm
        # fix the phase so equal hyperplanes compare equal elementwise
        k = int(np.argmax(np.abs(a)))
        a = a * np.exp(-1j * np.angle(a[k]))
        a.setflags(write=False)
        object.__setattr__(self, "normal", a)

    @property
    def n(self) -> int:
        return self.normal.size

    def basis(self) -> np.ndarray:
        """Orthonormal columns spanning the hyperplane, shape (n, n-1)."""
        _, _, vh = np.linalg.svd(self.normal[None, :])
        return vh[1:].conj().T

    def contains(self, v, tol: float = 1e-10) -> bool:
        v = np.asarray(v, dtype=complex)
        return bool(abs(self.normal @ v) <= tol * max(1.0, np.linalg.norm(v)))

    def chart(self, pivot: int | None = None):
        """(w, pivot) with w_j = a_j / a_pivot for j != pivot."""
        a = self.normal
        if pivot is None:
            pivot = int(np.argmax(np.abs(a)))
        if abs(a[pivot]) < 1e-8:
            raise DegenerateBoundary("pivot coefficient vanishes")
        w = np.delete(a / a[pivot], pivot)
        return w, pivot

    @classmethod
    def from_chart(cls, w, pivot: int) -> "Hyperplane":
        w = np.asarray(w, dtype=complex)
        return cls(np.insert(w, pivot, 1.0))

    def distance(self, other: "Hyperplane") -> float:
        """sin of the angle between the normals; 0 iff the hyperplanes coincide."""
        a, b = self.normal, other.normal
        # residual of projecting a onto b; avoids the cancellation in sqrt(1 - |<a,b>|^2)
        return float(np.linalg.norm(a - np.vdot(b, a) * b))


def holomorphic_tangent(d: DomainSpec, p) -> Hyperplane:
    grad = d.dz(np.asarray(p, dtype=complex))
    if np.linalg.norm(grad) < 1e-10:
        raise DegenerateBoundary("d rho vanishes at p")
    return Hyperplane(grad)


def strict_psc_margin(d: DomainSpec, boundary_samples, seed: int = 0) -> float:
    """Min over boundary samples of the smallest Levi eigenvalue on H_p.

    ``boundary_samples`` is a count (points drawn by :func:`sample_boundary`)
    or an array of points, which are first projected onto {rho = 0}.
    """
    if np.isscalar(boundary_samples):
        pts = sample_boundary(d, int(boundary_samples), seed)
    else:
        pts = project_to_boundary(d, boundary_samples)
    if np.max(np.abs(d.value(pts))) > 1e-8:
        raise DomainError("samples could not be projected to the boundary")
    margin = np.inf
    for p in pts:
        grad = d.dz(p)
        if np.linalg.norm(grad) < 1e-10:
            raise DegenerateBoundary(f"d rho vanishes at {p}")
        B = Hyperplane(grad).basis()
        L = d.levi_matrix(p)
        M = B.T @ L @ np.conj(B)
        M = 0.5 * (M + M.conj().T)
        margin = min(margin, float(np.linalg.eigvalsh(M)[0]))
    return margin


def tangent_bundle_chart(d: DomainSpec, p):
    """Chart coordinates (w, pivot) of H_p(b Omega) in CP^{n-1}."""
    grad = d.dz(np.asarray(p, dtype=complex))
    pivot = int(np.argmax(np.abs(grad)))
    if abs(grad[pivot]) < 1e-8:
        raise DegenerateBoundary("all first derivatives of rho are below 1e-8")
    return np.delete(grad / grad[pivot], pivot), pivot


class _LiftedRho:
    """rho(z) as a function of (z, w) in C^n x C^{n-1}."""

    def __init__(self, d: DomainSpec):
        self.d = d

    def value(self, Z):
        Z = np.asarray(Z, dtype=complex)
        return self.d.value(Z[..., : self.d.n])

    def dz(self, Z):
        Z = np.asarray(Z, dtype=complex)
        n = self.d.n
        out = np.zeros(Z.shape, dtype=complex)
        out[..., :n] = self.d.dz(Z[..., :n])
        return out


class _ChartPart:
    """Re or Im of w_j - rho_{z_j}(z) / rho_{z_pivot}(z)."""

    def __init__(self, d: DomainSpec, j: int, pivot: int, imaginary: bool):
        self.d, self.j, self.pivot, self.imaginary = d, j, pivot, imaginary
        others = [k for k in range(d.n) if k != pivot]
        self.slot = others.index(j)

    def _g(self, Z):
        n = self.d.n
        z = Z[..., :n]
        grad = self.d.dz(z)
        num, den = grad[..., self.j], grad[..., self.pivot]
        g = Z[..., n + self.slot] - num / den
        # derivatives of phi = num / den
        H = self.d.hessian_zz(z)      # rho_{z_a z_b}
        L = self.d.levi_matrix(z)     # rho_{z_a zbar_b}
        dphi = (H[..., self.j, :] * den[..., None] - num[..., None] * H[..., self.pivot, :]) / den[..., None] ** 2
        dphibar = (L[..., self.j, :] * den[..., None] - num[..., None] * L[..., self.pivot, :]) / den[..., None] ** 2
        gz = np.zeros(Z.shape, dtype=complex)
        gzbar = np.zeros(Z.shape, dtype=complex)
        gz[..., :n] = -dphi
        gzbar[..., :n] = -dphibar
        gz[..., n + self.slot] = 1.0
        return g, gz, gzbar

    def value(self, Z):
        g, _, _ = self._g(np.asarray(Z, dtype=complex))
        return g.imag if self.imaginary else g.real

    def dz(self, Z):
        _, gz, gzbar = self._g(np.asarray(Z, dtype=complex))
        if self.imaginary:
            return (gz - np.conj(gzbar)) / 2j
        return (gz + np.conj(gzbar)) / 2


def tangent_bundle_edge(d: DomainSpec, pivot: int | None = None) -> EdgeSpec:
    """The bundle {rho(z) = 0, w_j = rho_{z_j}/rho_{z_pivot}} as an edge in C^{2n-1}."""
    if pivot is None:
        pivot = d.n - 1
    funcs = [_LiftedRho(d)]
    for j in range(d.n):
        if j == pivot:
            continue
        funcs.append(_ChartPart(d, j, pivot, False))
        funcs.append(_ChartPart(d, j, pivot, True))
    return EdgeSpec(2 * d.n - 1, funcs)


def tangent_bundle_point(d: DomainSpec, p, pivot: int | None = None) -> np.ndarray:
    """The point (p, w(p)) of the bundle over a boundary point p."""
    p = np.asarray(p, dtype=complex)
    grad = d.dz(p)
    if pivot is None:
        pivot = d.n - 1
    return np.concatenate([p, np.delete(grad / grad[pivot], pivot)])


def tangent_bundle_edge_json(d: DomainSpec, pivot: int | None = None) -> dict:
    return {"builtin": "tangent-bundle", "domain": d.to_json(), "pivot": pivot}


# ---------------------------------------------------------------------------
# maps


@dataclass(frozen=True)
class MapUnderTest:
    """Holomorphic map with complex Jacobian df[i, j] = d f_i / d z_j."""

    f: Callable
    df: Callable
    source: DomainSpec
    target: DomainSpec
    name: str = "map"

    def __call__(self, z):
        return self.f(np.asarray(z, dtype=complex))

    def jacobian(self, z):
        return self.df(np.asarray(z, dtype=complex))

    def cauchy_riemann_residual(self, probes, h: float = 1e-5) -> float:
        """max of |d f/d zbar| and the mismatch between df and central differences."""
        worst = 0.0
        for z in np.atleast_2d(np.asarray(probes, dtype=complex)):
            J = self.jacobian(z)
            for k in range(self.source.n):
                e = np.zeros(self.source.n, dtype=complex)
                e[k] = h
                fx = (self(z + e) - self(z - e)) / (2 * h)
                fy = (self(z + 1j * e) - self(z - 1j * e)) / (2 * h)
                dbar = 0.5 * (fx + 1j * fy)
                dz = 0.5 * (fx - 1j * fy)
                worst = max(worst, float(np.max(np.abs(dbar))), float(np.max(np.abs(dz - J[:, k]))))
        return worst

    def compose(self, inner: "MapUnderTest") -> "MapUnderTest":
        """self o inner."""
        return MapUnderTest(
            lambda z: self.f(inner.f(z)),
            lambda z: self.df(inner.f(z)) @ inner.df(z),
            inner.source,
            self.target,
            f"{self.name}o{inner.name}",
        )


def identity_map(d: DomainSpec) -> MapUnderTest:
    return MapUnderTest(lambda z: np.array(z, dtype=complex), lambda z: np.eye(d.n, dtype=complex), d, d,
                        "identity")


def unitary_map(U, d: DomainSpec | None = None) -> MapUnderTest:
    U = np.asarray(U, dtype=complex)
    d = d if d is not None else ball(U.shape[0])
    return MapUnderTest(lambda z: U @ z, lambda z: U, d, d, "unitary")


def ball_automorphism(a) -> MapUnderTest:
    """phi_a(z) = (a - P_a z - s_a Q_a z) / (1 - <z, a>), an involution of the unit ball."""
    a = np.asarray(a, dtype=complex)
    n = a.size
    aa = float(np.vdot(a, a).real)
    if aa >= 1.0:
        raise DomainError("automorphism parameter must lie in the open ball")
    s = np.sqrt(1.0 - aa)
    if aa == 0.0:
        Lmat = np.eye(n, dtype=complex)
    else:
        u = a / np.linalg.norm(a)      # normalize first: a a*/|a|^2 overflows for subnormal |a|^2
        P = np.outer(u, np.conj(u))
        Lmat = P + s * (np.eye(n) - P)

    def f(z):
        return (a - Lmat @ z) / (1.0 - np.vdot(a, z))

    def df(z):
        D = 1.0 - np.vdot(a, z)
        return (-Lmat * D + np.outer(a - Lmat @ z, np.conj(a))) / D ** 2

    B = ball(n)
    return MapUnderTest(f, df, B, B, "automorphism")


def disc_power(k: int) -> MapUnderTest:
    D = ball(1)
    return MapUnderTest(lambda z: np.asarray(z) ** k, lambda z: np.array([[k * z[0] ** (k - 1)]]), D, D,
                        f"power{k}")


def inclusion(source: DomainSpec, target: DomainSpec) -> MapUnderTest:
    return MapUnderTest(lambda z: np.array(z, dtype=complex), lambda z: np.eye(source.n, dtype=complex),
                        source, target, "inclusion")


def coordinate_projection(n: int) -> MapUnderTest:
    """z -> z_1 from the n-ball to the disc."""
    row = np.zeros((1, n), dtype=complex)
    row[0, 0] = 1.0
    return MapUnderTest(lambda z: np.asarray(z)[:1], lambda z: row, ball(n), ball(1), "projection")


def lift_map(m: MapUnderTest, z, P: Hyperplane):
    """F(z, P) = (f(z), df(z) P); the image normal is df^{-T} applied to P's normal."""
    z = np.asarray(z, dtype=complex)
    J = m.jacobian(z)
    if J.shape[0] != J.shape[1] or np.linalg.cond(J) > 1e12:
        raise DomainError("df(z) is singular; the lift is undefined")
    normal = np.linalg.solve(J.T, P.normal)
    return m(z), Hyperplane(normal)


def boundary_distance(d: DomainSpec, z, starts: int = 8, seed: int = 0) -> float:
    """dist(z, b Omega). Closed form for centred balls, else multistart SLSQP on {rho = 0}."""
    from scipy.optimize import minimize

    z = np.asarray(z, dtype=complex)
    R = d.ball_radius
    if R is not None:
        return float(abs(R - np.linalg.norm(z)))
    rng = np.random.default_rng(seed)
    x0 = to_real(z)
    g = d.rho.gradient(z)
    dirs = [g / max(np.linalg.norm(g), 1e-300), -g / max(np.linalg.norm(g), 1e-300)]
    dirs += list(rng.standard_normal((max(starts - 2, 0), x0.size)))
    best = np.inf
    for u in dirs:
        u = u / np.linalg.norm(u)
        try:
            p0 = to_real(project_to_boundary(d, to_complex(x0 + 0.1 * u))[0])
        except DegenerateBoundary:
            continue
        res = minimize(
            lambda p: float(np.sum((p - x0) ** 2)),
            p0,
            jac=lambda p: 2 * (p - x0),
            constraints=[{"type": "eq", "fun": lambda p: d.value(to_complex(p)),
                          "jac": lambda p: d.rho.gradient(to_complex(p))}],
            method="SLSQP",
            options={"ftol": 1e-14, "maxiter": 200},
        )
        p = to_real(project_to_boundary(d, to_complex(res.x))[0])
        best = min(best, float(np.linalg.norm(p - x0)))
    if not np.isfinite(best):
        raise DomainError("boundary distance search failed from every start")
    return best
