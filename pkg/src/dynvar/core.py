"""State algebras (A, rho), the GNS inner product, the modular group, and
superoperators on M_n(C).

Vectorization is column-stacking throughout the package::

    vec(X)[j*n + i] == X[i, j]          (zero-based)
    vec(A @ X @ B) == kron(B.T, A) @ vec(X)

A state is stored as a trace-one density matrix ``omega`` with
``rho(a) = trace(omega @ a)``.  The density relative to the normalized trace
is ``h = n * omega``; the modular automorphism does not see the scale.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, NotHermitian, NotPositiveDefinite, TraceNotOne

EPS_EQ_DEFAULT = 1e-9
EPS_PSD = 1e-10
EPS_RANK = 1e-10


def eps_eq() -> float:
    """Relative equality tolerance; ``DYNVAR_TOL`` overrides the default."""
    value = os.environ.get("DYNVAR_TOL")
    return float(value) if value else EPS_EQ_DEFAULT


def fnorm(x) -> float:
    return float(np.linalg.norm(np.asarray(x)))


def is_small(residual: float, scale: float = 1.0, eps: float | None = None) -> bool:
    """``residual <= eps * max(scale, 1)``; mixed absolute/relative test."""
    eps = eps_eq() if eps is None else eps
    return residual <= eps * max(scale, 1.0)


def vec(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    return np.swapaxes(x, -1, -2).reshape(x.shape[:-2] + (-1,))


def devec(v: np.ndarray, n: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if n is None:
        n = int(round(np.sqrt(v.shape[-1])))
    return np.swapaxes(v.reshape(v.shape[:-1] + (n, n)), -1, -2)


def matrix_units(n: int) -> np.ndarray:
    """Array ``E`` of shape (n, n, n, n) with ``E[i, j]`` the unit E_ij."""
    return np.eye(n * n, dtype=complex).reshape(n, n, n, n)


def dag(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(np.conj(x), -1, -2)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


# ---------------------------------------------------------------------------
# state algebra
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StateAlgebra:
    """The pair (M_n(C), rho) with rho faithful.

    Build instances with :func:`make_state_algebra`; the eigendecomposition of
    ``omega`` is cached and every matrix power of ``h`` goes through it.
    """

    n: int
    omega: np.ndarray
    h_eigbasis: np.ndarray
    h_eigvals: np.ndarray

    @property
    def h(self) -> np.ndarray:
        return self.n * self.omega

    @property
    def is_tracial(self) -> bool:
        return bool(np.allclose(self.h_eigvals, self.h_eigvals[0], rtol=0, atol=1e-14))

    def h_power(self, z: complex) -> np.ndarray:
        """h**z on the principal branch (the spectrum of h is positive)."""
        u = self.h_eigbasis
        lam = np.exp(z * np.log(self.h_eigvals))
        return (u * lam) @ dag(u)

    def check(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=complex)
        if a.shape[-2:] != (self.n, self.n):
            raise DimensionMismatch(f"expected {self.n}x{self.n} matrices, got {a.shape}")
        return a

    @property
    def rho_row(self) -> np.ndarray:
        """Row vector r with rho(x) = r @ vec(x)."""
        return vec(self.omega.T)


def make_state_algebra(n: int, omega, *, eigbasis: np.ndarray | None = None) -> StateAlgebra:
    """Validate ``omega`` as a faithful density matrix on C^n.

    ``eigbasis`` may supply a specific unitary diagonalizing ``omega`` (for
    testing that results do not depend on eigenvector phases).
    """
    omega = np.asarray(omega, dtype=complex)
    if omega.shape != (n, n):
        raise DimensionMismatch(f"omega has shape {omega.shape}, expected ({n}, {n})")
    eps = eps_eq()
    scale = max(fnorm(omega), 1e-300)
    if fnorm(omega - dag(omega)) > eps * scale:
        raise NotHermitian("density matrix is not Hermitian")
    omega = (omega + dag(omega)) / 2
    if abs(np.trace(omega) - 1.0) > eps:
        raise TraceNotOne(f"trace(omega) = {np.trace(omega)}")
    if eigbasis is None:
        w, u = np.linalg.eigh(omega)
        order = np.argsort(w)[::-1]
        w, u = w[order], u[:, order]
    else:
        u = np.asarray(eigbasis, dtype=complex)
        w = np.real(np.einsum("ji,jk,ki->i", u.conj(), omega, u))
        if fnorm(u @ np.diag(w) @ dag(u) - omega) > 1e-12 * scale + eps * scale:
            raise DimensionMismatch("supplied eigbasis does not diagonalize omega")
    if w.min() <= EPS_PSD * w.max():
        raise NotPositiveDefinite(f"state is not faithful (min eigenvalue {w.min():.3g})")
    return StateAlgebra(n=n, omega=omega, h_eigbasis=u, h_eigvals=n * w)


def tracial(n: int) -> StateAlgebra:
    return make_state_algebra(n, np.eye(n) / n)


def rho(sa: StateAlgebra, a) -> complex:
    a = sa.check(a)
    return complex(np.trace(sa.omega @ a))


def gns_inner(sa: StateAlgebra, a, b) -> complex:
    """<a, b>_rho = rho(b* a)."""
    a, b = sa.check(a), sa.check(b)
    return complex(np.trace(sa.omega @ dag(b) @ a))


def modular(sa: StateAlgebra, a, z: complex) -> np.ndarray:
    """sigma_z(a) = h^{-iz} a h^{iz}; z = i gives delta(a) = h a h^{-1}."""
    a = sa.check(a)
    return sa.h_power(-1j * z) @ a @ sa.h_power(1j * z)


def delta(sa: StateAlgebra, a) -> np.ndarray:
    return modular(sa, a, 1j)


def delta_inv(sa: StateAlgebra, a) -> np.ndarray:
    return modular(sa, a, -1j)


def delta_half(sa: StateAlgebra, a) -> np.ndarray:
    return modular(sa, a, 0.5j)


def delta_defining_identity_check(sa: StateAlgebra, a, b) -> float:
    """|rho(ab) - rho(b delta(a))|."""
    return abs(rho(sa, sa.check(a) @ sa.check(b)) - rho(sa, sa.check(b) @ delta(sa, a)))


# ---------------------------------------------------------------------------
# superoperators
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Superoperator:
    """A linear map on M_n(C) as an n^2 x n^2 matrix acting on vec(x)."""

    n: int
    mat: np.ndarray = field(repr=False)

    def __post_init__(self):
        mat = np.asarray(self.mat, dtype=complex)
        if mat.shape != (self.n**2, self.n**2):
            raise DimensionMismatch(f"superoperator matrix has shape {mat.shape}")
        object.__setattr__(self, "mat", mat)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        if x.shape[-2:] != (self.n, self.n):
            raise DimensionMismatch(f"cannot apply to shape {x.shape}")
        return devec(vec(x) @ self.mat.T, self.n)

    def _same(self, other: "Superoperator"):
        if not isinstance(other, Superoperator) or other.n != self.n:
            raise DimensionMismatch("superoperators act on different algebras")

    def __add__(self, other):
        self._same(other)
        return Superoperator(self.n, self.mat + other.mat)

    def __sub__(self, other):
        self._same(other)
        return Superoperator(self.n, self.mat - other.mat)

    def __neg__(self):
        return Superoperator(self.n, -self.mat)

    def __mul__(self, c):
        return Superoperator(self.n, c * self.mat)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return Superoperator(self.n, self.mat / c)

    def __matmul__(self, other):
        """Composition: (self @ other)(x) = self(other(x))."""
        self._same(other)
        return Superoperator(self.n, self.mat @ other.mat)

    def norm(self) -> float:
        return fnorm(self.mat)

    def images(self) -> np.ndarray:
        """Array T of shape (n, n, n, n) with T[k, l] = L(E_kl)."""
        return self(matrix_units(self.n))


def identity(n: int) -> Superoperator:
    return Superoperator(n, np.eye(n * n))


def zero(n: int) -> Superoperator:
    return Superoperator(n, np.zeros((n * n, n * n)))


def super_from_map(n: int, f: Callable[[np.ndarray], np.ndarray]) -> Superoperator:
    """Column (j*n + i) of the matrix is vec(f(E_ij))."""
    cols = [vec(np.asarray(f(e), dtype=complex)) for e in matrix_units(n).transpose(1, 0, 2, 3).reshape(-1, n, n)]
    return Superoperator(n, np.stack(cols, axis=1))


def sandwich(a, b) -> Superoperator:
    """x -> a x b."""
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise DimensionMismatch("sandwich factors must be square of equal size")
    return Superoperator(a.shape[0], np.kron(b.T, a))


def left_mult(a) -> Superoperator:
    a = np.asarray(a, dtype=complex)
    return sandwich(a, np.eye(a.shape[0]))


def right_mult(a) -> Superoperator:
    a = np.asarray(a, dtype=complex)
    return sandwich(np.eye(a.shape[0]), a)


def ad(p) -> Superoperator:
    """x -> [p, x]."""
    return left_mult(p) - right_mult(p)


def gns_gram(sa: StateAlgebra) -> np.ndarray:
    """G with <a, b>_rho = vec(b)^H G vec(a)."""
    return np.kron(sa.omega.T, np.eye(sa.n))


def adjoint_gns(sa: StateAlgebra, L: Superoperator) -> Superoperator:
    """Adjoint of L on L^2(A, rho): <L a, b>_rho = <a, L* b>_rho."""
    if L.n != sa.n:
        raise DimensionMismatch("superoperator and state algebra differ in size")
    g = gns_gram(sa)
    return Superoperator(sa.n, np.linalg.solve(g, dag(L.mat) @ g))


def from_images(images: np.ndarray) -> Superoperator:
    """Inverse of :meth:`Superoperator.images`: ``images[k, l] = L(E_kl)``."""
    images = np.asarray(images, dtype=complex)
    n = images.shape[0]
    cols = vec(images.transpose(1, 0, 2, 3).reshape(n * n, n, n))
    return Superoperator(n, cols.T)
