"""Real polynomials on C^n with exact first and second order jets.

Points are complex arrays of shape ``(..., n)``. Internally a polynomial
lives on the real coordinates ``(x_1, ..., x_n, y_1, ..., y_n)`` with
``z_k = x_k + i y_k``, and the Wirtinger derivatives are assembled from
the real gradient and Hessian:

    d/dz_k     = (d/dx_k - i d/dy_k) / 2
    d/dzbar_k  = (d/dx_k + i d/dy_k) / 2
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def to_real(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return np.concatenate([z.real, z.imag], axis=-1)


def to_complex(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.shape[-1] // 2
    return x[..., :n] + 1j * x[..., n:]


@dataclass(frozen=True)
class RealPolynomial:
    """Real polynomial in the 2n real coordinates of C^n.

    ``exponents`` has shape (terms, 2n); the first n columns are powers of
    x, the last n powers of y.
    """

    n: int
    coefficients: np.ndarray
    exponents: np.ndarray = field(repr=False)

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float).reshape(-1)
        exps = np.asarray(self.exponents, dtype=int).reshape(-1, 2 * self.n)
        if coef.shape[0] != exps.shape[0]:
            raise ValueError("one exponent row per coefficient required")
        if np.any(exps < 0):
            raise ValueError("negative exponent")
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "exponents", exps)

    # -- construction -------------------------------------------------
    @classmethod
    def zero(cls, n: int) -> "RealPolynomial":
        return cls(n, np.zeros(0), np.zeros((0, 2 * n), dtype=int))

    @classmethod
    def constant(cls, n: int, value: float) -> "RealPolynomial":
        return cls(n, [value], np.zeros((1, 2 * n), dtype=int))

    @classmethod
    def from_terms(cls, n: int, terms) -> "RealPolynomial":
        """Build from ``[[coef, [e_x1..e_xn, e_y1..e_yn]], ...]``."""
        terms = list(terms)
        if not terms:
            return cls.zero(n)
        coef = [float(c) for c, _ in terms]
        exps = [list(e) for _, e in terms]
        for e in exps:
            if len(e) != 2 * n:
                raise ValueError(f"exponent vector must have length {2 * n}")
        return cls(n, coef, exps)

    @classmethod
    def squared_modulus(cls, n: int, weights) -> "RealPolynomial":
        """sum_k w_k |z_k|^2."""
        weights = np.broadcast_to(np.asarray(weights, dtype=float), (n,))
        terms = []
        for k, w in enumerate(weights):
            for off in (0, n):
                e = [0] * (2 * n)
                e[k + off] = 2
                terms.append([w, e])
        return cls.from_terms(n, terms)

    @classmethod
    def coordinate(cls, n: int, index: int, imaginary: bool = False) -> "RealPolynomial":
        e = [0] * (2 * n)
        e[index + (n if imaginary else 0)] = 1
        return cls.from_terms(n, [[1.0, e]])

    def terms(self) -> list:
        return [[float(c), [int(v) for v in e]] for c, e in zip(self.coefficients, self.exponents)]

    def __add__(self, other: "RealPolynomial") -> "RealPolynomial":
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        return RealPolynomial(
            self.n,
            np.concatenate([self.coefficients, other.coefficients]),
            np.concatenate([self.exponents, other.exponents]),
        )

    def scale(self, factor: float) -> "RealPolynomial":
        return RealPolynomial(self.n, factor * self.coefficients, self.exponents)

    @property
    def degree(self) -> int:
        if self.exponents.shape[0] == 0:
            return 0
        return int(self.exponents.sum(axis=1).max())

    # -- evaluation ---------------------------------------------------
    def _powers(self, x: np.ndarray, shift: np.ndarray | None = None):
        exps = self.exponents if shift is None else self.exponents - shift
        T = exps.shape[0]
        mono = np.ones(x.shape[:-1] + (T,))
        cache: dict = {}
        for i in range(T):
            if np.any(exps[i] < 0):
                mono[..., i] = 0.0
                continue
            for d in np.flatnonzero(exps[i]):
                key = (d, exps[i, d])
                if key not in cache:
                    cache[key] = x[..., d] ** int(exps[i, d])
                mono[..., i] *= cache[key]
        return mono

    def value(self, z) -> np.ndarray:
        x = to_real(z)
        if self.coefficients.size == 0:
            return np.zeros(x.shape[:-1])
        return self._powers(x) @ self.coefficients

    def gradient(self, z) -> np.ndarray:
        """Real gradient, shape (..., 2n)."""
        x = to_real(z)
        out = np.zeros(x.shape)
        if self.coefficients.size == 0:
            return out
        for d in range(2 * self.n):
            unit = np.zeros(2 * self.n, dtype=int)
            unit[d] = 1
            out[..., d] = self._powers(x, unit) @ (self.coefficients * self.exponents[:, d])
        return out

    def hessian(self, z) -> np.ndarray:
        """Real Hessian, shape (..., 2n, 2n)."""
        x = to_real(z)
        m = 2 * self.n
        out = np.zeros(x.shape + (m,))
        if self.coefficients.size == 0:
            return out
        for a in range(m):
            for b in range(a, m):
                shift = np.zeros(m, dtype=int)
                shift[a] += 1
                shift[b] += 1
                ea = self.exponents[:, a]
                eb = self.exponents[:, b] - (1 if a == b else 0)
                val = self._powers(x, shift) @ (self.coefficients * ea * eb)
                out[..., a, b] = val
                out[..., b, a] = val
        return out

    # -- Wirtinger jets -----------------------------------------------
    def dz(self, z) -> np.ndarray:
        """Complex gradient (d rho / d z_k), shape (..., n)."""
        g = self.gradient(z)
        n = self.n
        return 0.5 * (g[..., :n] - 1j * g[..., n:])

    def levi_matrix(self, z) -> np.ndarray:
        """Complex Hessian L[j, k] = d^2 rho / dz_j dzbar_k."""
        h = self.hessian(z)
        n = self.n
        xx, xy = h[..., :n, :n], h[..., :n, n:]
        yx, yy = h[..., n:, :n], h[..., n:, n:]
        return 0.25 * (xx + yy + 1j * (xy - yx))

    def hessian_zz(self, z) -> np.ndarray:
        """d^2 rho / dz_j dz_k."""
        h = self.hessian(z)
        n = self.n
        xx, xy = h[..., :n, :n], h[..., :n, n:]
        yx, yy = h[..., n:, :n], h[..., n:, n:]
        return 0.25 * (xx - yy - 1j * (xy + yx))

    def __call__(self, z) -> np.ndarray:
        return self.value(z)

    def gradient_bound(self, box: float = 1.0) -> np.ndarray:
        """Upper bounds for sup |d/dx_k|, |d/dy_k| over the box ||.||_inf <= box."""
        if self.coefficients.size == 0:
            return np.zeros(2 * self.n)
        out = np.zeros(2 * self.n)
        deg = self.exponents.sum(axis=1)
        for d in range(2 * self.n):
            e = self.exponents[:, d]
            out[d] = np.sum(np.abs(self.coefficients) * e * box ** np.maximum(deg - 1, 0))
        return out

    def to_json(self) -> dict:
        return {"n": self.n, "terms": self.terms()}

    @classmethod
    def from_json(cls, data: dict) -> "RealPolynomial":
        return cls.from_terms(int(data["n"]), data.get("terms", []))
