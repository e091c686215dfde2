"""Bounds for the Kobayashi-Royden infinitesimal metric F(z, v).

Upper bounds come from competitors (inscribed balls and explicit discs),
lower brackets from plurisubharmonic defining functions, and the unit
disc and ball have closed forms used as oracles. Existential constants
are never fixed in code; :func:`fitted_constant` measures them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .domains import DomainSpec, MapUnderTest, boundary_distance, sample_boundary
from .jets import RealPolynomial


class MetricError(ValueError):
    pass


class CertificateError(MetricError):
    """A hypothesis probe failed; ``witnesses`` lists the offending points."""

    def __init__(self, message, witnesses=()):
        super().__init__(message)
        self.witnesses = list(witnesses)


@dataclass(frozen=True)
class MetricQuery:
    domain: DomainSpec
    z: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=complex))
        v = np.atleast_1d(np.asarray(self.v, dtype=complex))
        if z.shape != (self.domain.n,) or v.shape != (self.domain.n,):
            raise MetricError("z and v must be vectors in C^n")
        if not self.domain.value(z) < 0:
            raise MetricError("z must lie inside the domain")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "v", v)

    @property
    def vnorm(self) -> float:
        return float(np.linalg.norm(self.v))


@dataclass
class MetricEstimate:
    lower: float
    upper: float
    exact: float | None = None
    witnesses: dict = field(default_factory=dict)

    def consistent(self, slack: float = 1e-9) -> bool:
        ok = self.lower <= self.upper + slack
        if self.exact is not None:
            ok = ok and self.lower <= self.exact + slack and self.exact <= self.upper + slack
        return bool(ok)


# ---------------------------------------------------------------------------
# closed forms


def exact_metric_disc(z, v) -> float:
    z = complex(np.asarray(z).reshape(-1)[0])
    if abs(z) >= 1:
        raise MetricError("z must lie in the open unit disc")
    return float(abs(complex(np.asarray(v).reshape(-1)[0])) / (1.0 - abs(z) ** 2))


def exact_metric_ball(z, v, radius: float = 1.0) -> float:
    """sqrt((1-|z|^2)|v|^2 + |<v,z>|^2) / (1-|z|^2) on the ball of the given radius."""
    z = np.atleast_1d(np.asarray(z, dtype=complex)) / radius
    v = np.atleast_1d(np.asarray(v, dtype=complex)) / radius
    zz = float(np.vdot(z, z).real)
    if zz >= 1:
        raise MetricError("z must lie in the open ball")
    pair = abs(np.vdot(z, v))
    w = 1.0 - zz
    return float(np.sqrt(w * np.vdot(v, v).real + pair ** 2) / w)


def exact_metric(q: MetricQuery) -> float | None:
    """Closed form when the domain is a centred ball (the disc when n = 1), else None."""
    R = q.domain.ball_radius
    if R is None:
        return None
    return exact_metric_ball(q.z, q.v, R)


# ---------------------------------------------------------------------------
# upper bounds


def upper_bound_inscribed(q: MetricQuery) -> float:
    """|v| / dist(z, b Omega): the inscribed ball is a competitor."""
    dist = boundary_distance(q.domain, q.z)
    if not dist > 0:
        raise MetricError("boundary distance vanished")
    return q.vnorm / dist


@dataclass
class DiscSearchResult:
    """Feasible competitor h = P(zeta) / (1 - b zeta) with h(0) = z, h'(0) = v / value."""

    value: float
    degree: int
    b: complex
    coefficients: np.ndarray
    fallback: bool = False
    boundary_max: float = -np.inf

    def __call__(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        k = np.arange(self.coefficients.shape[0])
        P = (zeta[..., None] ** k) @ self.coefficients
        return P / (1.0 - self.b * zeta)[..., None]


def _disc_coefficients(x, z, v, d):
    n = z.size
    s, b = x[0], x[1] + 1j * x[2]
    coef = np.zeros((d + 1, n), dtype=complex)
    coef[0] = z
    coef[1] = s * v - b * z
    if d > 1:
        rest = x[3:].reshape(2, d - 1, n)
        coef[2:] = rest[0] + 1j * rest[1]
    return s, b, coef


def _boundary_values(dom, b, coef, theta):
    zeta = np.exp(1j * theta)
    k = np.arange(coef.shape[0])
    P = (zeta[:, None] ** k) @ coef
    return dom.value(P / (1.0 - b * zeta)[:, None])


def extremal_disc_search(q: MetricQuery, degree: int, restarts: int = 4, seed: int = 0,
                         samples: int = 256, margin: float = 1e-6, dense: int = 4096) -> DiscSearchResult:
    """Minimize lambda over discs h = P / (1 - b zeta), deg P <= degree, h(0) = z, h'(0) = v / lambda.

    Feasibility rho(h(e^{i theta})) <= -margin is imposed at ``samples``
    boundary points and re-verified on ``dense`` points; the search runs
    degrees 1..degree with warm starts, so the value is non-increasing in
    the degree. Plurisubharmonicity of rho makes the boundary test enough.
    """
    if degree < 1:
        raise MetricError("degree must be at least 1")
    dom, z, v = q.domain, q.z, q.v
    if q.vnorm == 0:
        return DiscSearchResult(0.0, degree, 0j, np.vstack([z, np.zeros_like(z)]))
    theta = 2 * np.pi * np.arange(samples) / samples
    theta_dense = 2 * np.pi * (np.arange(dense) + 0.5) / dense
    rng = np.random.default_rng(seed)
    inscribed = upper_bound_inscribed(q)
    n = dom.n

    def dense_ok(x, d):
        _, b, coef = _disc_coefficients(x, z, v, d)
        return float(np.max(_boundary_values(dom, b, coef, theta_dense)))

    best_x, best_s = None, 0.0
    for d in range(1, degree + 1):
        nvar = 3 + 2 * n * (d - 1)
        starts = []
        if best_x is not None:
            x = np.zeros(nvar)
            x[: best_x.size] = best_x
            starts.append(x)
        for r in range(restarts):
            x = np.zeros(nvar)
            x[0] = 0.5 / inscribed
            if r:
                x[1:3] = 0.3 * rng.uniform(-1, 1, 2)
                x[3:] = 0.05 * rng.standard_normal(nvar - 3)
            starts.append(x)
        cons = [
            {"type": "ineq", "fun": lambda x, d=d: -_boundary_values(dom, *_disc_coefficients(x, z, v, d)[1:], theta) - margin},
            {"type": "ineq", "fun": lambda x: 0.999 ** 2 - x[1] ** 2 - x[2] ** 2},
        ]
        for x0 in starts:
            res = minimize(lambda x: -x[0], x0, jac=lambda x: -np.eye(x.size)[0], constraints=cons,
                           method="SLSQP", options={"maxiter": 300, "ftol": 1e-13})
            x = res.x
            if x[0] <= 0 or x[1] ** 2 + x[2] ** 2 >= 1:
                continue
            if dense_ok(x, d) > 0:
                # shrink the derivative scale until the dense check passes
                lo, hi = 0.0, x[0]
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    y = x.copy()
                    y[0] = mid
                    if dense_ok(y, d) <= 0:
                        lo = mid
                    else:
                        hi = mid
                if lo == 0.0:
                    continue
                x = x.copy()
                x[0] = lo
                if dense_ok(x, d) > 0:
                    continue
            if x[0] > best_s:
                best_s, best_x = float(x[0]), x.copy()
    if best_x is None:
        return DiscSearchResult(inscribed, degree, 0j, np.vstack([z, v / inscribed]), fallback=True)
    pad = np.zeros(3 + 2 * n * (degree - 1))
    pad[: best_x.size] = best_x
    s, b, coef = _disc_coefficients(pad, z, v, degree)
    return DiscSearchResult(1.0 / s, degree, complex(b), coef, False, dense_ok(pad, degree))


# ---------------------------------------------------------------------------
# lower brackets


def _levi_min(jet: RealPolynomial, pts) -> np.ndarray:
    L = jet.levi_matrix(np.asarray(pts, dtype=complex))
    L = 0.5 * (L + np.conj(np.swapaxes(L, -1, -2)))
    return np.linalg.eigvalsh(L)[..., 0]


def _probe_points(n: int, count: int, radius: float, seed: int) -> np.ndarray:
    """Seeded points uniform in the ball of the given radius in C^n."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((count, 2 * n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.uniform(size=count) ** (1.0 / (2 * n))
    x = g * r[:, None]
    return x[:, :n] + 1j * x[:, n:]


def sibony_lower_bracket(q: MetricQuery, psh: RealPolynomial | None = None, C1: float = 1.0,
                         form: str = "displayed", probes=None, seed: int = 0) -> float:
    """Bracket of the psh lower bound for F(z, v) with the outer constant left to be fitted.

    ``form="displayed"`` returns C1^2 |<d rho, v>|^2 / |rho|^2 + C1 |v|^2 / |rho|^2.
    ``form="sibony"`` returns sqrt(C1^2 |<d rho, v>|^2 / |rho|^2 + C1 |v|^2 / |rho|),
    which has the homogeneity of a metric and equals F exactly on the unit ball
    with rho = |z|^2 - 1 and C1 = 1.

    The Levi form of ``psh`` must dominate C1 |v|^2 at ``probes`` (default: z
    and 64 seeded points of the domain near z).
    """
    rho = psh if psh is not None else q.domain.rho
    val = float(rho.value(q.z))
    if not val < 0:
        raise MetricError("psh function must be negative at z")
    if probes is None:
        extra = q.z + _probe_points(q.domain.n, 64, 0.5 * boundary_distance(q.domain, q.z), seed)
        probes = np.vstack([q.z, extra])
    lam = _levi_min(rho, probes)
    bad = np.asarray(probes)[lam < C1 - 1e-12]
    if bad.size:
        raise CertificateError(f"Levi form below C1 = {C1} at {len(bad)} probes", bad)
    pair = abs(np.sum(rho.dz(q.z) * q.v)) ** 2
    vv = q.vnorm ** 2
    if form == "displayed":
        return float(C1 ** 2 * pair / val ** 2 + C1 * vv / val ** 2)
    if form == "sibony":
        return float(np.sqrt(C1 ** 2 * pair / val ** 2 + C1 * vv / abs(val)))
    raise MetricError(f"unknown bracket form {form!r}")


def localization_lower_bracket(domain: DomainSpec, w, xi, u: RealPolynomial, eps: float, B: float,
                               probes: int = 512, seed: int = 0) -> float:
    """|xi| |u(w)|^{-1/2}, after probing the hypotheses on u.

    (i) u - eps |z|^2 is psh at probes of D inside the 3-ball;
    (ii) |u| <= B at probes of D inside the 2-ball; w lies in D inside the 2-ball.
    """
    n = domain.n
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    if not (domain.value(w) < 0 and np.linalg.norm(w) < 2):
        raise MetricError("w must lie in D and in the ball of radius 2")
    uw = float(u.value(w))
    if not uw < 0:
        raise MetricError("u must be negative at w")
    p3 = _probe_points(n, probes, 3.0, seed)
    p3 = p3[domain.value(p3) < 0]
    shifted = u + RealPolynomial.squared_modulus(n, -eps)
    lam = _levi_min(shifted, p3)
    bad = p3[lam < -1e-12]
    if bad.size:
        raise CertificateError("u - eps|z|^2 fails to be psh at probes", bad)
    p2 = _probe_points(n, probes, 2.0, seed + 1)
    p2 = p2[domain.value(p2) < 0]
    bad = p2[np.abs(u.value(p2)) > B]
    if bad.size:
        raise CertificateError(f"|u| exceeds B = {B} at probes", bad)
    return float(np.linalg.norm(xi) / np.sqrt(abs(uw)))


# ---------------------------------------------------------------------------
# fitted constants and sweeps


def random_queries(domain: DomainSpec, count: int, seed: int, max_radius: float = 0.99):
    """Seeded (z, v) pairs with z uniform in the max_radius-ball (kept inside the domain)."""
    rng = np.random.default_rng(seed)
    out = []
    R = domain.ball_radius or 1.0
    while len(out) < count:
        z = _probe_points(domain.n, 1, max_radius * R, int(rng.integers(2 ** 32)))[0]
        if not domain.value(z) < 0:
            continue
        v = rng.standard_normal(domain.n) + 1j * rng.standard_normal(domain.n)
        out.append(MetricQuery(domain, z, v))
    return out


def fitted_constant(exact, bracket) -> float:
    """Empirical infimum of exact / bracket over entries with a positive bracket."""
    exact = np.asarray(exact, dtype=float)
    bracket = np.asarray(bracket, dtype=float)
    keep = bracket > 0
    if not np.any(keep):
        raise MetricError("no positive bracket values")
    return float(np.min(exact[keep] / bracket[keep]))


def constant_drift(small: float, large: float) -> float:
    """Relative change of a fitted constant when the sample is doubled."""
    return abs(large - small) / abs(small)


def circumscribed_lower(q: MetricQuery, samples: int = 256, seed: int = 0) -> float:
    """Lower bound from a centred ball containing the domain (monotonicity under inclusion)."""
    d = q.domain
    if d.kind == "ellipsoid":
        R = 1.0 / np.sqrt(min(d.params["a"]))
    else:
        R = float(np.max(np.linalg.norm(sample_boundary(d, samples, seed), axis=1))) * (1 + 1e-3)
    return exact_metric_ball(q.z, q.v, R)


def estimate(q: MetricQuery, degree: int = 3, seed: int = 0) -> MetricEstimate:
    """Sandwich of certified lower and upper values, with the closed form when known."""
    exact = exact_metric(q)
    lower = exact if exact is not None else circumscribed_lower(q, seed=seed)
    search = extremal_disc_search(q, degree, seed=seed)
    upper = min(search.value, upper_bound_inscribed(q))
    return MetricEstimate(lower, upper, exact, {"disc": search})


def decreasing_property_check(f: MapUnderTest, q: MetricQuery, tol: float = 1e-9) -> bool:
    """F_target(f(z), df(z) v) <= F_source(z, v) + tol.

    Uses closed forms when both domains are balls; otherwise compares a
    certified lower value on the target with an upper value on the source.
    """
    if f.source is not q.domain and f.source.to_json() != q.domain.to_json():
        raise MetricError("query domain is not the source of the map")
    image = MetricQuery(f.target, f(q.z), f.jacobian(q.z) @ q.v)
    target = exact_metric(image)
    if target is None:
        target = circumscribed_lower(image)
    source = exact_metric(q)
    if source is None:
        source = min(extremal_disc_search(q, 3).value, upper_bound_inscribed(q))
    return bool(target <= source + tol)
