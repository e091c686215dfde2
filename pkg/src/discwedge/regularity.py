"""Empirical checks of the boundary regularity chain.

Every estimate here is measured along rays approaching a boundary or an
edge and summarized by a log-log power-law fit. The arithmetic of the
Holder bootstrap is carried out in exact rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .bishop import DiscFamily
from .circle import grid, harmonic_extension_array
from .domains import DomainSpec, MapUnderTest, boundary_distance, sample_boundary
from .jets import RealPolynomial, to_complex


class RegularityError(ValueError):
    pass


class HypothesisError(RegularityError):
    """A probe contradicts a hypothesis of the estimate being measured."""

    def __init__(self, message, witnesses=()):
        super().__init__(message)
        self.witnesses = list(witnesses)


def geometric_distances(s0: float = 0.1, count: int = 20) -> np.ndarray:
    return s0 * 2.0 ** -np.arange(count)


@dataclass(frozen=True)
class RayProfile:
    base: np.ndarray
    direction: np.ndarray
    s: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if s.ndim != 1 or s.size < 2 or np.any(np.diff(s) >= 0) or s[-1] <= 0:
            raise RegularityError("ray distances must decrease strictly and stay positive")
        if v.shape != s.shape or not np.all(np.isfinite(v)):
            raise RegularityError("ray values must be finite, one per distance")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "values", v)

    def points(self) -> np.ndarray:
        return np.asarray(self.base) + self.s[:, None] * np.asarray(self.direction)


@dataclass(frozen=True)
class ExponentFit:
    """g(s) ~ constant * s^exponent on [s_min, s_max]."""

    exponent: float
    constant: float
    r2: float
    s_range: tuple
    exact_zero: bool = False


def fit_power_law(s, g) -> ExponentFit:
    """Least squares for log g = log C + exponent * log s."""
    s = np.asarray(s, dtype=float)
    g = np.asarray(g, dtype=float)
    if np.all(g == 0):
        return ExponentFit(np.inf, 0.0, 1.0, (float(s.min()), float(s.max())), exact_zero=True)
    if np.any(g <= 0) or np.any(s <= 0):
        raise RegularityError("log-log fit needs positive data")
    x, y = np.log(s), np.log(g)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (icpt + slope * x)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 if ss == 0 else float(np.clip(1.0 - np.sum(resid ** 2) / ss, 0.0, 1.0))
    return ExponentFit(float(slope), float(np.exp(icpt)), r2, (float(s.min()), float(s.max())))


def _worst(fits: Sequence[ExponentFit], lowest: bool = True) -> ExponentFit:
    live = [f for f in fits if not f.exact_zero]
    if not live:
        return fits[0]
    pick = min if lowest else max
    exps = [f.exponent for f in live]
    return ExponentFit(pick(exps), max(f.constant for f in live), min(f.r2 for f in live),
                       (min(f.s_range[0] for f in live), max(f.s_range[1] for f in live)))


# ---------------------------------------------------------------------------
# subharmonic vanishing rates on the disc


def harmonic_measure(zeta, a: float, b: float) -> np.ndarray:
    """Harmonic measure of the arc {e^{it}: a < t < b} at interior points."""
    zeta = np.asarray(zeta, dtype=complex)
    ang = np.angle((np.exp(1j * b) - zeta) / (np.exp(1j * a) - zeta))
    return np.mod(ang, 2 * np.pi) / np.pi - (b - a) / (2 * np.pi)


def _subharmonic_probes(phi, centers, radius, tol):
    t = grid(64)
    circ = centers[:, None] + radius * np.exp(1j * t)[None, :]
    means = np.asarray(phi(circ)).mean(axis=1)
    vals = np.asarray(phi(centers))
    return centers[vals > means + tol]


def vanishing_rate_fit(phi: Callable, arc=(0.0, np.pi), angles=None, s=None, tol: float = 1e-10) -> ExponentFit:
    """Fit phi((1 - s) e^{i alpha}) ~ C s^beta on rays landing inside ``arc``.

    Before fitting, ``phi`` is probed for nonnegativity, for vanishing on
    the arc and for the sub-mean-value inequality on small circles. The
    result is the worst case over rays (smallest exponent, largest constant).
    """
    a, b = arc
    if angles is None:
        angles = a + (b - a) * np.array([0.25, 0.5, 0.75])
    s = geometric_distances() if s is None else np.asarray(s, dtype=float)
    r = np.linspace(0.0, 0.95, 12)
    t = grid(48)
    probes = (r[:, None] * np.exp(1j * t)[None, :]).reshape(-1)
    vals = np.asarray(phi(probes))
    if np.any(vals < -tol):
        raise HypothesisError("function is negative at probes", probes[vals < -tol])
    edge = (1 - 1e-9) * np.exp(1j * (a + (b - a) * np.linspace(0.1, 0.9, 9)))
    ev = np.abs(np.asarray(phi(edge)))
    if np.any(ev > 1e-6):
        raise HypothesisError("function does not vanish on the arc", edge[ev > 1e-6])
    centers = (np.linspace(0.0, 0.8, 5)[:, None] * np.exp(1j * grid(8))[None, :]).reshape(-1)
    bad = _subharmonic_probes(phi, centers, 0.05, tol)
    if bad.size:
        raise HypothesisError("sub-mean-value inequality fails", bad)
    fits = []
    for alpha in np.atleast_1d(angles):
        zeta = (1.0 - s) * np.exp(1j * alpha)
        fits.append(fit_power_law(s, np.asarray(phi(zeta))))
    return _worst(fits)


@dataclass
class EdgeRateSummary:
    """Worst case over family members of the fits of psi o h_k."""

    disc_fit: ExponentFit          # psi(h(zeta)) ~ C (1 - |zeta|)^beta
    distance_fit: ExponentFit      # psi(h(zeta)) ~ C dist(h(zeta), E)^beta
    ratio_constants: np.ndarray    # sup psi / dist per member
    disc_constants: np.ndarray     # fitted C per member
    exact_zero: bool = False

    @property
    def ratio_spread(self) -> float:
        c = self.ratio_constants
        return float((c.max() - c.min()) / c.min()) if c.size and c.min() > 0 else 0.0

    @property
    def constant_spread(self) -> float:
        c = self.disc_constants
        return float((c.max() - c.min()) / c.min()) if c.size and c.min() > 0 else 0.0


def edge_vanishing_rate(psi: Callable, family: DiscFamily, members=None, angles=None, s=None) -> EdgeRateSummary:
    """Apply :func:`vanishing_rate_fit` to psi o h_k for members of a solved family.

    Rays land at grid angles of the upper arc, where the attached trace
    lies on E exactly; distances to E use the graph of the family.
    """
    if np.any(family.status != "converged"):
        raise RegularityError("family has unsolved members")
    graph = family.template.graph
    N = family.template.N
    if members is None:
        members = range(family.size)
    th = grid(N)
    if angles is None:
        angles = th[[N // 8, N // 4, 3 * N // 8]]
    s = geometric_distances() if s is None else np.asarray(s, dtype=float)
    traces = family.traces()

    disc_fits, dist_fits, ratios, consts = [], [], [], []
    zero = True
    for k in members:
        tr = traces[k]

        def phi(zeta, tr=tr):
            zeta = np.asarray(zeta, dtype=complex)
            h = np.moveaxis(harmonic_extension_array(tr, zeta), 0, -1)
            return psi(h)

        fit = vanishing_rate_fit(phi, (0.0, np.pi), angles, s)
        if fit.exact_zero:
            continue
        zero = False
        disc_fits.append(fit)
        consts.append(fit.constant)
        per_ray = []
        sup = 0.0
        for alpha in angles:
            h = np.moveaxis(harmonic_extension_array(tr, (1.0 - s) * np.exp(1j * alpha)), 0, -1)
            d = graph.distances(h)
            vals = np.asarray(psi(h))
            per_ray.append(fit_power_law(d, vals))
            sup = max(sup, float(np.max(vals / d)))
        dist_fits.append(_worst(per_ray))
        ratios.append(sup)
    if zero:
        z = ExponentFit(np.inf, 0.0, 1.0, (float(s.min()), float(s.max())), exact_zero=True)
        return EdgeRateSummary(z, z, np.zeros(0), np.zeros(0), exact_zero=True)
    return EdgeRateSummary(_worst(disc_fits), _worst(dist_fits), np.array(ratios), np.array(consts))


# ---------------------------------------------------------------------------
# Hopf ratio and gradient growth near a boundary


def inward_rays(d: DomainSpec, count: int, seed: int, s=None, offset: float = 0.0):
    """Base boundary points, unit inward normals and the distances used along them."""
    s = geometric_distances() if s is None else np.asarray(s, dtype=float)
    base = sample_boundary(d, count, seed)
    g = to_complex(d.rho.gradient(base))
    normal = -g / np.linalg.norm(g, axis=1, keepdims=True)
    return base + offset * normal, normal, s


@dataclass
class HopfReport:
    s: np.ndarray
    sup_ratio: np.ndarray
    bounded: bool

    @property
    def ratio(self) -> float:
        return float(self.sup_ratio.max())


def hopf_ratio(f: MapUnderTest, count: int = 32, seed: int = 0, s=None, growth: float = 2.0) -> HopfReport:
    """sup |rho_2(f(z))| / dist(z, b Omega_1) at each inward distance level.

    ``bounded`` is true when the ratio at the finest level is at most
    ``growth`` times its value at the coarsest level. Images outside the
    target raise :class:`HypothesisError`.
    """
    s = geometric_distances(0.1, 12) if s is None else np.asarray(s, dtype=float)
    base, normal, s = inward_rays(f.source, count, seed, s)
    sup = np.zeros(s.size)
    for i, si in enumerate(s):
        pts = base + si * normal
        img = np.array([f(p) for p in pts])
        rho2 = f.target.value(img)
        if np.any(rho2 >= 0):
            raise HypothesisError("image leaves the target domain", pts[rho2 >= 0])
        dist = np.array([boundary_distance(f.source, p) for p in pts])
        sup[i] = float(np.max(np.abs(rho2) / dist))
    return HopfReport(s, sup, bool(sup[-1] <= growth * sup[0]))


def gradient_profiles(f: MapUnderTest, count: int = 32, seed: int = 0, s=None) -> list:
    """Operator norm of df along inward normal rays."""
    base, normal, s = inward_rays(f.source, count, seed, s)
    out = []
    for p, u in zip(base, normal):
        vals = []
        for si in s:
            J = f.jacobian(p + si * u)
            if not np.all(np.isfinite(J)):
                raise RegularityError("jacobian is not finite")
            vals.append(np.linalg.norm(J, 2))
        out.append(RayProfile(p, u, s, np.array(vals)))
    return out


def gradient_exponent_fit(f: MapUnderTest | None, rays: Sequence[RayProfile] | None = None,
                          count: int = 32, seed: int = 0) -> ExponentFit:
    """Fit ||df|| ~ A d^{-beta}; the reported exponent is beta (largest over rays).

    With ``f`` None the values already stored in ``rays`` are fitted, which
    is how synthetic profiles are checked.
    """
    if f is not None:
        rays = gradient_profiles(f, count, seed, None if rays is None else rays[0].s)
    if not rays:
        raise RegularityError("no rays to fit")
    fits = [fit_power_law(r.s, r.values) for r in rays]
    flipped = [ExponentFit(-g.exponent, g.constant, g.r2, g.s_range) for g in fits]
    return _worst(flipped, lowest=False)


# ---------------------------------------------------------------------------
# exponent arithmetic


def _exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(str(float(x)))


def holder_from_gradient(beta) -> Fraction:
    """Integrating ||df|| <= A d^{-beta} along rays gives Holder exponent 1 - beta."""
    beta = _exact(beta)
    if beta < 0:
        raise RegularityError("gradient exponent must be nonnegative")
    if beta >= 1:
        raise RegularityError("gradient exponent >= 1 gives no Holder conclusion")
    return 1 - beta


@dataclass(frozen=True)
class BootstrapStep:
    theta: Fraction
    power: Fraction   # rho o f <= C d^power
    beta: Fraction    # ||df|| <= A d^{-beta}
    alpha: Fraction   # Holder exponent


def bootstrap_schedule(theta) -> BootstrapStep:
    """Exponents obtained from the psh power rho^theta, 1/2 < theta < 1."""
    th = _exact(theta)
    if not Fraction(1, 2) < th < 1:
        raise RegularityError("theta must lie in (1/2, 1)")
    return BootstrapStep(th, 1 / th, 1 - 1 / (2 * th), 1 / (2 * th))


@dataclass
class PshCertificate:
    passed: bool
    theta: float
    min_eigenvalue: float
    witness: np.ndarray | None = None


def psh_power_check(rho: RealPolynomial, theta: float, probes, band: float = 1e-6, tol: float = 1e-8,
                    allow_extended: bool = False) -> PshCertificate:
    """Smallest complex-Hessian eigenvalue of rho^theta over the probes.

    i d dbar (rho^theta) = theta rho^{theta-1} L + theta (theta-1) rho^{theta-2} d rho (x) conj(d rho).
    Admissible theta is (1/2, 1], or (0, 1] with ``allow_extended``.
    """
    lo = 0.0 if allow_extended else 0.5
    if not lo < theta <= 1:
        raise RegularityError(f"theta must lie in ({lo}, 1]")
    probes = np.atleast_2d(np.asarray(probes, dtype=complex))
    val = rho.value(probes)
    if np.any(val < band):
        raise HypothesisError(f"probes inside the exclusion band rho < {band}", probes[val < band])
    dz = rho.dz(probes)
    L = rho.levi_matrix(probes)
    M = (theta * val ** (theta - 1))[:, None, None] * L
    M = M + (theta * (theta - 1) * val ** (theta - 2))[:, None, None] * dz[:, :, None] * np.conj(dz[:, None, :])
    M = 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))
    eig = np.linalg.eigvalsh(M)[:, 0]
    k = int(np.argmin(eig))
    passed = bool(eig[k] >= -tol)
    return PshCertificate(passed, float(theta), float(eig[k]), None if passed else probes[k])


def bootstrap_loop_check(psi_values, rho_values, dist, theta: float, fit: ExponentFit) -> bool:
    """Given psi = rho^theta <= C d with a fitted rate >= 1, check rho <= C^{1/theta} d^{1/theta} on the data."""
    if fit.exponent < 1:
        return False
    rho_values = np.asarray(rho_values, dtype=float)
    dist = np.asarray(dist, dtype=float)
    C = float(np.max(np.asarray(psi_values) / dist))
    return bool(np.all(rho_values <= (C * dist) ** (1.0 / theta) * (1 + 1e-9)))


# ---------------------------------------------------------------------------
# modulus of continuity


def modulus_of_continuity_fit(f: Callable, domain: DomainSpec, count: int = 32, seed: int = 0,
                              separations=None, offset: float = 1e-8) -> ExponentFit:
    """Fit sup |f(z) - f(w)| ~ C |z - w|^alpha over near-boundary pairs.

    Each base point sits ``offset`` inside the boundary; partners are
    displaced by a dyadic separation along the inward normal and along
    seeded inward directions. ``f`` is any callable on points of C^n.
    """
    seps = geometric_distances(0.05, 14) if separations is None else np.asarray(separations, dtype=float)
    base, normal, _ = inward_rays(domain, count, seed, seps, offset)
    rng = np.random.default_rng(seed + 1)
    n = domain.n
    sup = np.zeros(seps.size)
    for p, nu in zip(base, normal):
        g = rng.standard_normal((3, 2 * n))
        dirs = [nu]
        for row in g:
            u = to_complex(row)
            u = u / np.linalg.norm(u)
            # reflect into the inward half space
            if np.real(np.vdot(nu, u)) < 0:
                u = -u
            dirs.append(u)
        fp = np.asarray(f(p))
        for u in dirs:
            for i, dlt in enumerate(seps):
                w = p + dlt * u
                if not domain.value(w) < 0:
                    continue
                sup[i] = max(sup[i], float(np.linalg.norm(np.asarray(f(w)) - fp)))
    keep = sup > 0
    return fit_power_law(seps[keep], sup[keep])


def radial_power_warp(alpha: float) -> Callable:
    """z / |z| (1 - (1 - |z|)^alpha): Holder alpha across the unit sphere, Lipschitz tangentially."""

    def warp(z):
        z = np.asarray(z, dtype=complex)
        r = np.linalg.norm(z, axis=-1, keepdims=True)
        return z / np.where(r == 0, 1.0, r) * (1.0 - np.clip(1.0 - r, 0.0, None) ** alpha)

    return warp


radial_sqrt_warp = radial_power_warp(0.5)
