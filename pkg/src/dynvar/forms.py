"""Universal one- and two-forms over M_n(C).

A one-form is stored densely as an element of A (x) A: ``coeffs[i, j, k, l]`` is
the coefficient of ``E_ij (x) E_kl``.  A two-form lives in A (x) A (x) A with six
indices in the same pattern.  Forms are validated against the multiplication
maps at construction; operations between valid forms assume membership.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg

from .core import (
    StateAlgebra,
    Superoperator,
    eps_eq,
    fnorm,
    matrix_units,
)
from .errors import DimensionMismatch, NotAOneForm, NotATwoForm


def mu(t: np.ndarray) -> np.ndarray:
    """Multiplication A (x) A -> A."""
    return np.einsum("ijjl->il", t)


def mu2(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Both multiplications A^{(x)3} -> A (x) A."""
    return np.einsum("ijjlmp->ilmp", t), np.einsum("ijkllp->ijkp", t)


@dataclass(frozen=True, eq=False)
class OneForm:
    n: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.n,) * 4:
            raise DimensionMismatch(f"one-form tensor has shape {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def checked(cls, n: int, coeffs, tol: float | None = None) -> "OneForm":
        form = cls(n, coeffs)
        tol = eps_eq() if tol is None else tol
        if fnorm(mu(form.coeffs)) > tol * max(fnorm(form.coeffs), 1.0):
            raise NotAOneForm("tensor is not in the kernel of multiplication")
        return form

    @classmethod
    def from_terms(cls, terms) -> "OneForm":
        """sum of b (x) a over ``(b, a)`` pairs, checked for membership."""
        terms = [(np.asarray(b, dtype=complex), np.asarray(a, dtype=complex)) for b, a in terms]
        n = terms[0][0].shape[0]
        return cls.checked(n, sum(np.einsum("ij,kl->ijkl", b, a) for b, a in terms))

    @property
    def flat(self) -> np.ndarray:
        return self.coeffs.reshape(-1)

    def __add__(self, other):
        return OneForm(self.n, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return OneForm(self.n, self.coeffs - other.coeffs)

    def __mul__(self, c):
        return OneForm(self.n, c * self.coeffs)

    __rmul__ = __mul__

    def __matmul__(self, other: "OneForm") -> "TwoForm":
        return wedge(self, other)


@dataclass(frozen=True, eq=False)
class TwoForm:
    n: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.n,) * 6:
            raise DimensionMismatch(f"two-form tensor has shape {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def checked(cls, n: int, coeffs, tol: float | None = None) -> "TwoForm":
        form = cls(n, coeffs)
        tol = eps_eq() if tol is None else tol
        left, right = mu2(form.coeffs)
        if max(fnorm(left), fnorm(right)) > tol * max(fnorm(form.coeffs), 1.0):
            raise NotATwoForm("tensor is not in the kernel of both multiplications")
        return form

    @property
    def flat(self) -> np.ndarray:
        return self.coeffs.reshape(-1)

    def __add__(self, other):
        return TwoForm(self.n, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return TwoForm(self.n, self.coeffs - other.coeffs)

    def __mul__(self, c):
        return TwoForm(self.n, c * self.coeffs)

    __rmul__ = __mul__


def d(x) -> OneForm:
    """dx = 1 (x) x - x (x) 1."""
    x = np.asarray(x, dtype=complex)
    one = np.eye(x.shape[0])
    return OneForm(x.shape[0], np.einsum("ij,kl->ijkl", one, x) - np.einsum("ij,kl->ijkl", x, one))


def a_dx(a, x) -> OneForm:
    """a dx = a (x) x - ax (x) 1."""
    a, x = np.asarray(a, dtype=complex), np.asarray(x, dtype=complex)
    one = np.eye(a.shape[0])
    return OneForm(a.shape[0], np.einsum("ij,kl->ijkl", a, x) - np.einsum("ij,kl->ijkl", a @ x, one))


def mod_act(a, form, b):
    """a . form . b: left factor multiplied by a, right factor by b."""
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    if a.shape != (form.n, form.n) or b.shape != (form.n, form.n):
        raise DimensionMismatch("module action by matrices of the wrong size")
    if isinstance(form, OneForm):
        return OneForm(form.n, np.einsum("im,mjkl,ln->ijkn", a, form.coeffs, b))
    return TwoForm(form.n, np.einsum("im,mjklpq,qr->ijklpr", a, form.coeffs, b))


def star1(form: OneForm) -> OneForm:
    """(x (x) y)* = y* (x) x*."""
    return OneForm(form.n, np.conj(form.coeffs.transpose(3, 2, 1, 0)))


def star2(form: TwoForm) -> TwoForm:
    """(a (x) b (x) c)* = c* (x) b* (x) a*."""
    return TwoForm(form.n, np.conj(form.coeffs.transpose(5, 4, 3, 2, 1, 0)))


def wedge(w1: OneForm, w2: OneForm) -> TwoForm:
    """(a (x) b)(c (x) e) = a (x) bc (x) e."""
    if w1.n != w2.n:
        raise DimensionMismatch("forms over different algebras")
    return TwoForm(w1.n, np.einsum("ijkl,lqrs->ijkqrs", w1.coeffs, w2.coeffs))


def _lift(form, left: np.ndarray, right: np.ndarray):
    if isinstance(form, OneForm):
        return OneForm(form.n, np.einsum("ai,ijkl,jb,ck,ld->abcd", left, form.coeffs, right, left, right))
    return TwoForm(
        form.n,
        np.einsum("ai,ijklpq,jb,ck,ld,ep,qf->abcdef",
                  left, form.coeffs, right, left, right, left, right, optimize=True),
    )


_NAMED = {"delta": 1j, "delta_inv": -1j, "delta_half": 0.5j, "delta_half_inv": -0.5j}


def mod_lift(sa: StateAlgebra, form, which="delta"):
    """Apply sigma_z to every tensor factor of a form.

    ``which`` is one of ``"delta"``, ``"delta_inv"``, ``"delta_half"`` or a
    complex number z (real z gives the modular group at time t = z).
    """
    z = _NAMED[which] if isinstance(which, str) else complex(which)
    return _lift(form, sa.h_power(-1j * z), sa.h_power(1j * z))


def lift_columns(sa: StateAlgebra, cols: np.ndarray, which="delta") -> np.ndarray:
    """mod_lift applied to every column of an n^4 x N stack of flat one-forms."""
    n = sa.n
    z = _NAMED[which] if isinstance(which, str) else complex(which)
    left, right = sa.h_power(-1j * z), sa.h_power(1j * z)
    t = cols.reshape((n,) * 4 + (-1,))
    out = np.einsum("ai,ijklz,jb,ck,ld->abcdz", left, t, right, left, right, optimize=True)
    return out.reshape(n**4, -1)


def delta_hat(sa: StateAlgebra, form):
    return mod_lift(sa, form, "delta")


def sharp(sa: StateAlgebra, form: OneForm) -> OneForm:
    """omega^# = delta^{1/2}-hat(omega*)."""
    return mod_lift(sa, star1(form), "delta_half")


# ---------------------------------------------------------------------------
# theta_L and the symbol
# ---------------------------------------------------------------------------

def theta_tensor(L: Superoperator) -> np.ndarray:
    """theta on A^{(x)3}: theta(a (x) b (x) c) = -a L(b) c, as a (n,)*6 -> (n, n) kernel.

    Returns ``T`` with ``theta(xi) = einsum('ijklmp,kljm->ip', xi, T)``.
    """
    return -L.images()


def theta_L(L: Superoperator, xi: TwoForm) -> np.ndarray:
    if xi.n != L.n:
        raise DimensionMismatch("two-form and superoperator differ in size")
    return np.einsum("ijklmp,kljm->ip", xi.coeffs, theta_tensor(L))


def symbol_functional(sa: StateAlgebra, L: Superoperator) -> np.ndarray:
    """f with sigma_L(xi) = sum(f * xi.coeffs) for xi in Omega^2."""
    return -np.einsum("si,kqjr->ijkqrs", sa.omega, L.images())


def metric_functional(sa: StateAlgebra, kernel: np.ndarray) -> np.ndarray:
    """f with g(a (x) b (x) c) = rho(a K(b, c)), ``kernel[k, l, m, p] = K(E_kl, E_mp)``."""
    return np.einsum("ai,klmpja->ijklmp", sa.omega, kernel)


def symbol(sa: StateAlgebra, L: Superoperator, xi: TwoForm) -> complex:
    """sigma_L = rho o theta_L."""
    return complex(np.trace(sa.omega @ theta_L(L, xi)))


def pairing_matrix(functional: np.ndarray) -> np.ndarray:
    """B with f(w1 w2) = w1.flat @ B @ w2.flat for one-forms w1, w2."""
    n = functional.shape[0]
    b = np.einsum("ijkqrs,lm->ijklmqrs", functional, np.eye(n))
    return b.reshape(n**4, n**4)


def star_permutation(n: int) -> np.ndarray:
    """Index map r with star1(w).flat == conj(w.flat[r])."""
    return np.arange(n**4).reshape((n,) * 4).transpose(3, 2, 1, 0).reshape(-1)


@lru_cache(maxsize=8)
def _kermu(n: int) -> np.ndarray:
    e = np.eye(n)
    m = np.einsum("ai,jk,lb->abijkl", e, e, e).reshape(n * n, n**4)
    basis = scipy.linalg.null_space(m)
    basis.setflags(write=False)
    return basis


def kermu_matrix(n: int) -> np.ndarray:
    """Orthonormal basis of ker(mu) as columns of an n^4 x (n^4 - n^2) matrix."""
    return _kermu(n)


def kermu_basis(n: int) -> list[OneForm]:
    return [OneForm(n, col.reshape((n,) * 4)) for col in _kermu(n).T]


def spanning_one_forms(n: int) -> np.ndarray:
    """Columns are E_ij dE_kl for all (i, j, k, l)."""
    e = matrix_units(n).reshape(n * n, n, n)
    cols = [a_dx(a, x).flat for a in e for x in e]
    return np.stack(cols, axis=1)


def quadrilinear_residual(L: Superoperator) -> np.ndarray:
    """L(xay) - xL(ay) - L(xa)y + xL(a)y for all matrix-unit triples (x, a, y)."""
    n = L.n
    e = matrix_units(n).reshape(n * n, n, n)
    xa = np.einsum("xij,ajk->xaik", e, e)
    ay = np.einsum("aij,yjk->ayik", e, e)
    xay = np.einsum("xaij,yjk->xayik", xa, e)
    la = L(e)
    out = L(xay)
    out = out - np.einsum("xij,ayjk->xayik", e, L(ay))
    out = out - np.einsum("xaij,yjk->xayik", L(xa), e)
    out = out + np.einsum("xij,ajk,ykl->xayil", e, la, e)
    return out


def is_first_order(L: Superoperator, tol: float | None = None) -> bool:
    tol = eps_eq() if tol is None else tol
    return fnorm(quadrilinear_residual(L)) <= tol * max(L.norm(), 1.0)


def theta_dxdy(L: Superoperator) -> np.ndarray:
    """theta_L(dx dy) for all matrix-unit pairs, shape (n, n, n, n, n, n).

    ``out[k, l, m, p]`` is L(xy) - xL(y) - L(x)y + xL(1)y at x = E_kl, y = E_mp.
    """
    n = L.n
    e = matrix_units(n).reshape(n * n, n, n)
    img = L(e)
    l1 = L(np.eye(n))
    xy = np.einsum("xij,yjk->xyik", e, e)
    out = (
        L(xy)
        - np.einsum("xij,yjk->xyik", e, img)
        - np.einsum("xij,yjk->xyik", img, e)
        + np.einsum("xij,jk,ykl->xyil", e, l1, e)
    )
    return out.reshape((n,) * 6)
