"""Spectral calculus on the unit circle.

Functions on the circle are carried by their values at the uniform grid
theta_k = 2 pi k / N. The conjugation operator ``T`` acts on Fourier
coefficients by the multiplier ``-i sgn(k)`` (zero on the mean and on the
Nyquist mode), so that ``u + i T(u)`` is the boundary trace of a
holomorphic function on the disc whose imaginary part vanishes at 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

EDGE_CUTOFF = 1e-12


class CircleError(ValueError):
    pass


def grid(N: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(N) / N


def _check_size(N: int) -> None:
    if N < 4 or N % 2:
        raise CircleError(f"sample count must be even and >= 4, got {N}")


def _multiplier(N: int) -> np.ndarray:
    k = np.fft.fftfreq(N, d=1.0 / N)
    m = -1j * np.sign(k)
    m[N // 2] = 0.0
    return m


def hilbert_array(u: np.ndarray) -> np.ndarray:
    """Conjugate function of real samples along the last axis."""
    u = np.asarray(u)
    if np.iscomplexobj(u):
        if np.any(u.imag != 0):
            raise CircleError("hilbert transform needs real-valued samples")
        u = u.real
    N = u.shape[-1]
    _check_size(N)
    return np.fft.ifft(np.fft.fft(u, axis=-1) * _multiplier(N), axis=-1).real


def harmonic_extension_array(samples: np.ndarray, zeta) -> np.ndarray:
    """Poisson integral of the trigonometric interpolant of ``samples``.

    ``samples`` has shape (..., N); ``zeta`` any shape. The result has shape
    ``samples.shape[:-1] + zeta.shape``. Mode k contributes
    c_k r^|k| e^{ik phi}; the Nyquist mode is treated as cos(N theta / 2).
    """
    samples = np.asarray(samples)
    zeta = np.asarray(zeta, dtype=complex)
    N = samples.shape[-1]
    _check_size(N)
    r = np.abs(zeta)
    if np.any(r > 1.0 - EDGE_CUTOFF):
        raise CircleError("evaluation point too close to the unit circle")
    coef = np.fft.fft(samples, axis=-1) / N
    half = N // 2
    kpos = np.arange(half)
    zf = zeta.reshape(-1)
    # holomorphic part: sum_{k=0}^{N/2-1} c_k zeta^k
    zpow = zf[None, :] ** kpos[:, None]
    zbar_pow = np.conj(zpow[1:])
    out = coef[..., :half] @ zpow
    # antiholomorphic part: sum_{k=1}^{N/2-1} c_{-k} conj(zeta)^k
    neg = coef[..., N - 1 : half : -1]
    out = out + neg @ zbar_pow
    # Nyquist: c_{N/2} r^{N/2} cos(N phi / 2)
    nyq = (zf ** half + np.conj(zf) ** half) / 2.0
    out = out + coef[..., half : half + 1] * nyq
    if not np.iscomplexobj(samples):
        out = out.real
    return out.reshape(samples.shape[:-1] + zeta.shape)


def poisson_kernel(zeta, t) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=complex)
    t = np.asarray(t, dtype=float)
    return (1.0 - np.abs(zeta) ** 2) / (2.0 * np.pi * np.abs(np.exp(1j * t) - zeta) ** 2)


def poisson_quadrature(samples: np.ndarray, zeta) -> np.ndarray:
    """Trapezoid quadrature of the Poisson kernel against the samples.

    Independent of :func:`harmonic_extension_array`; accurate when the
    kernel is well resolved by the grid (|zeta| not too close to 1).
    """
    samples = np.asarray(samples)
    N = samples.shape[-1]
    theta = grid(N)
    zeta = np.asarray(zeta, dtype=complex)
    K = poisson_kernel(zeta.reshape(-1)[:, None], theta[None, :]) * (2.0 * np.pi / N)
    out = samples @ K.T
    return out.reshape(samples.shape[:-1] + zeta.shape)


@dataclass(frozen=True)
class CircleFunction:
    """Samples of a scalar or vector function on the uniform circle grid.

    ``samples`` has shape (N,) or (n, N).
    """

    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples)
        if s.ndim not in (1, 2):
            raise CircleError("samples must be shaped (N,) or (n, N)")
        _check_size(s.shape[-1])
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @classmethod
    def from_function(cls, func, N: int) -> "CircleFunction":
        return cls(np.asarray(func(grid(N))))

    @property
    def N(self) -> int:
        return self.samples.shape[-1]

    @property
    def dimension(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[0]

    @property
    def theta(self) -> np.ndarray:
        return grid(self.N)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.samples) or bool(np.all(self.samples.imag == 0))

    def mean(self):
        return self.samples.mean(axis=-1)

    def to_json(self) -> str:
        s = self.samples
        if np.iscomplexobj(s):
            payload = {"N": self.N, "real": s.real.tolist(), "imag": s.imag.tolist()}
        else:
            payload = {"N": self.N, "samples": s.tolist()}
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "CircleFunction":
        data = json.loads(text)
        if "samples" in data:
            s = np.asarray(data["samples"], dtype=float)
        else:
            s = np.asarray(data["real"], dtype=float) + 1j * np.asarray(data["imag"], dtype=float)
        if s.shape[-1] != data["N"]:
            raise CircleError("sample count does not match N")
        return cls(s)


def hilbert_transform(u: CircleFunction) -> CircleFunction:
    if not u.is_real:
        raise CircleError("hilbert transform needs a real-valued CircleFunction")
    return CircleFunction(hilbert_array(np.real(u.samples)))


def poisson_extend(u: CircleFunction, zeta):
    """Harmonic extension of ``u`` evaluated at ``zeta`` (scalar or array)."""
    out = harmonic_extension_array(u.samples, zeta)
    if np.ndim(zeta) == 0 and u.samples.ndim == 1:
        return out.item()
    return out


@dataclass(frozen=True)
class AnalyticDisc:
    """Holomorphic map of the closed unit disc into C^n from its boundary trace."""

    boundary: CircleFunction

    @property
    def dimension(self) -> int:
        return self.boundary.dimension

    @property
    def trace(self) -> np.ndarray:
        """Boundary samples as an (n, N) complex array."""
        return np.atleast_2d(self.boundary.samples).astype(complex)

    def coefficients(self) -> np.ndarray:
        """Taylor coefficients a_0..a_{N/2-1}, shape (n, N/2)."""
        N = self.boundary.N
        return (np.fft.fft(self.trace, axis=-1) / N)[:, : N // 2]

    def evaluate(self, zeta) -> np.ndarray:
        """Values at interior points; shape ``zeta.shape + (n,)``."""
        vals = harmonic_extension_array(self.trace, zeta)
        return np.moveaxis(vals, 0, -1)

    def derivative(self, zeta) -> np.ndarray:
        """Complex derivative h'(zeta) from the Taylor coefficients, |zeta| <= 1."""
        a = self.coefficients()
        k = np.arange(a.shape[-1])
        zeta = np.asarray(zeta, dtype=complex)
        zf = zeta.reshape(-1)
        powers = np.where(k[:, None] > 0, zf[None, :] ** np.maximum(k - 1, 0)[:, None], 0.0)
        vals = (a * k) @ powers
        return np.moveaxis(vals.reshape((a.shape[0],) + zeta.shape), 0, -1)

    def center(self) -> np.ndarray:
        return self.trace.mean(axis=-1)

    def cauchy_riemann_residual(self, radius: float = 0.9, points: int = 24, h: float = 1e-5) -> float:
        """max |d h / d zbar| by central differences on a polar grid."""
        r = np.linspace(0.0, radius, points)[1:]
        phi = np.linspace(0.0, 2 * np.pi, points, endpoint=False)
        zeta = (r[:, None] * np.exp(1j * phi[None, :])).reshape(-1)
        fx = (self.evaluate(zeta + h) - self.evaluate(zeta - h)) / (2 * h)
        fy = (self.evaluate(zeta + 1j * h) - self.evaluate(zeta - 1j * h)) / (2 * h)
        dbar = 0.5 * (fx + 1j * fy)
        return float(np.max(np.abs(dbar)))


def analytic_completion(u: CircleFunction, c) -> AnalyticDisc:
    """Disc with boundary trace u + i (T(u) + c), componentwise."""
    if not u.is_real:
        raise CircleError("analytic completion needs real boundary data")
    s = np.atleast_2d(np.real(u.samples))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.shape != (s.shape[0],):
        raise CircleError(f"offset has shape {c.shape}, expected ({s.shape[0]},)")
    trace = s + 1j * (hilbert_array(s) + c[:, None])
    if np.ndim(u.samples) == 1:
        trace = trace[0]
    return AnalyticDisc(CircleFunction(trace))


def poisson_kernel_bound_check(zeta: complex, t: float, tau: float) -> bool:
    """Check K_P(zeta, t) <= (1/pi)(1 - |zeta|) / |e^{it} - zeta|^2.

    Preconditions: |arg zeta| <= tau / 2, |t| > tau (t taken in (-pi, pi]),
    |zeta| < 1.
    """
    zeta = complex(zeta)
    t = math.remainder(float(t), 2 * math.pi)
    if abs(zeta) >= 1.0:
        raise CircleError("zeta must lie in the open unit disc")
    if zeta != 0 and abs(math.atan2(zeta.imag, zeta.real)) > tau / 2:
        raise CircleError("|arg zeta| exceeds tau / 2")
    if abs(t) <= tau:
        raise CircleError("|t| must exceed tau")
    lhs = float(poisson_kernel(zeta, t))
    rhs = (1.0 - abs(zeta)) / (math.pi * abs(complex(math.cos(t), math.sin(t)) - zeta) ** 2)
    return lhs <= rhs
