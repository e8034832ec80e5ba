"""Modular cochains in dimensions 0-2, the twisted coboundary, and the
four equivalent exactness tests for operators in D(A, rho)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    StateAlgebra,
    Superoperator,
    adjoint_gns,
    ad,
    commutator,
    dag,
    delta,
    delta_inv,
    eps_eq,
    fnorm,
    matrix_units,
    rho,
)
from .errors import (
    InternalInconsistency,
    NotACochain,
    UnsupportedDimension,
)
from .forms import lift_columns, pairing_matrix, spanning_one_forms, symbol_functional
from .generators import _require_domain, extract_inner_potential, is_derivation


@dataclass(frozen=True, eq=False)
class ModularCochain:
    """Multilinear functional on A^{dim+1}; ``tensor[i, j, k, l, ...]`` is its
    value on (E_ij, E_kl, ...)."""

    dim: int
    tensor: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.tensor.shape[0]

    def __call__(self, *args) -> complex:
        if len(args) != self.dim + 1:
            raise TypeError(f"{self.dim}-cochain takes {self.dim + 1} arguments")
        out = self.tensor
        for a in args:
            out = np.tensordot(np.asarray(a), out, axes=([0, 1], [0, 1]))
        return complex(out)


def _delta_inv_images(sa: StateAlgebra) -> np.ndarray:
    """D[i, j] = delta^{-1}(E_ij)."""
    return delta_inv(sa, matrix_units(sa.n))


def cochain_residual(sa: StateAlgebra, phi: np.ndarray, dim: int) -> np.ndarray:
    """Left minus right side of the cyclic-modular condition on all unit tuples."""
    di = _delta_inv_images(sa)
    if dim == 0:
        return phi - np.einsum("ijkl,kl->ij", di, phi)
    if dim == 1:
        return phi + np.einsum("klpq,pqij->ijkl", di, phi)
    if dim == 2:
        return phi - np.einsum("mrpq,pqijkl->ijklmr", di, phi)
    raise UnsupportedDimension(f"cochains of dimension {dim} are not supported")


def is_cochain(sa: StateAlgebra, phi, dim: int | None = None, tol: float | None = None) -> bool:
    if isinstance(phi, ModularCochain):
        phi, dim = phi.tensor, phi.dim
    tol = eps_eq() if tol is None else tol
    return fnorm(cochain_residual(sa, phi, dim)) <= tol * max(fnorm(phi), 1.0)


def _cob0(di: np.ndarray, t0: np.ndarray) -> np.ndarray:
    n = t0.shape[0]
    return np.einsum("jk,il->ijkl", np.eye(n), t0) - np.einsum("klpi,pj->ijkl", di, t0)


def _cob1(di: np.ndarray, t1: np.ndarray) -> np.ndarray:
    n = t1.shape[0]
    e = np.eye(n)
    return (
        np.einsum("jk,ilmr->ijklmr", e, t1)
        - np.einsum("lm,ijkr->ijklmr", e, t1)
        + np.einsum("mrpi,pjkl->ijklmr", di, t1)
    )


def coboundary(sa: StateAlgebra, phi: ModularCochain) -> ModularCochain:
    """b_delta: C^0 -> C^1 and C^1 -> C^2."""
    di = _delta_inv_images(sa)
    if phi.dim == 0:
        return ModularCochain(1, _cob0(di, phi.tensor))
    if phi.dim == 1:
        return ModularCochain(2, _cob1(di, phi.tensor))
    raise UnsupportedDimension("coboundary is implemented on C^0 and C^1 only")


def functional_cochain(sa: StateAlgebra, p) -> ModularCochain:
    """The zero-cochain a -> rho(a p)."""
    p = sa.check(p)
    return ModularCochain(0, (p @ sa.omega).T.copy())


def zero_cochain_rep(sa: StateAlgebra, psi) -> np.ndarray:
    """The unique p with psi(a) = rho(a p)."""
    t = psi.tensor if isinstance(psi, ModularCochain) else np.asarray(psi)
    if not is_cochain(sa, t, 0):
        raise NotACochain("functional is not invariant under the modular automorphism")
    return np.linalg.solve(sa.omega.T, t).T


def rho_pairing(sa: StateAlgebra) -> np.ndarray:
    """P[i, j, k, l] = rho(E_ij E_kl)."""
    return np.einsum("jk,li->ijkl", np.eye(sa.n), sa.omega)


def omega_form(sa: StateAlgebra, L: Superoperator) -> np.ndarray:
    """omega_L(x, y) = rho(x L(y)) - rho(L(x) y) on matrix-unit pairs."""
    img = L.images()
    return np.einsum("klja,ai->ijkl", img, sa.omega) - np.einsum("la,ijak->ijkl", sa.omega, img)


def _commutator_pairing(sa: StateAlgebra) -> np.ndarray:
    """Columns: flattened tensor of (x, y) -> rho(x [E_ab, y]) for each (a, b)."""
    e = matrix_units(sa.n).reshape(-1, sa.n, sa.n)
    cols = [omega_from_derivation(sa, ad(u)) for u in e]
    return np.stack([c.reshape(-1) for c in cols], axis=1)


def omega_from_derivation(sa: StateAlgebra, D: Superoperator) -> np.ndarray:
    """(x, y) -> rho(x D(y))."""
    return np.einsum("klja,ai->ijkl", D.images(), sa.omega)


# ---------------------------------------------------------------------------
# exactness
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExactnessReport:
    exact: bool
    v: np.ndarray | None
    per_criterion: dict
    residuals: dict

    def as_dict(self) -> dict:
        return {
            "exact": self.exact,
            "per_criterion": dict(self.per_criterion),
            "residuals": dict(self.residuals),
        }


def _criterion_coboundary(sa, om, scale, tol):
    n = sa.n
    di = _delta_inv_images(sa)
    basis = matrix_units(n).reshape(-1, n, n)
    cob = np.stack([_cob0(di, b).reshape(-1) for b in basis], axis=1)
    cyc = np.stack([cochain_residual(sa, b, 0).reshape(-1) for b in basis], axis=1)
    a = np.vstack([cob, cyc])
    rhs = np.concatenate([om.reshape(-1), np.zeros(n * n)])
    sol = np.linalg.lstsq(a, rhs, rcond=None)[0]
    res = fnorm(a @ sol - rhs)
    return res <= tol * scale, res


def _criterion_potential(sa, om, scale, tol):
    n = sa.n
    a = _commutator_pairing(sa)
    sol = np.linalg.lstsq(a, om.reshape(-1), rcond=None)[0]
    res = fnorm(a @ sol - om.reshape(-1))
    v = sol.reshape(n, n)
    herm = (v + dag(v)) / 2
    lam = np.trace(herm) / n
    scalar_res = fnorm(herm - lam * np.eye(n))
    v = (v - dag(v)) / 2
    v = v - rho(sa, v) * np.eye(n)
    res2 = fnorm(a @ v.reshape(-1) - om.reshape(-1))
    fixed_res = fnorm(delta(sa, v) - v)
    worst = max(res, scalar_res, res2, fixed_res)
    return worst <= tol * scale, worst, v


def kms_residual(sa: StateAlgebra, functional: np.ndarray) -> float:
    """max |f(w1 w2) - f(w2 delta-hat(w1))| over the spanning pairs E_ij dE_kl."""
    n = sa.n
    f = spanning_one_forms(n)
    b = pairing_matrix(functional)
    left = f.T @ b @ f
    right = (f.T @ b @ lift_columns(sa, f, "delta")).T
    return float(np.abs(left - right).max())


def exactness_report(sa: StateAlgebra, L: Superoperator, tol: float | None = None) -> ExactnessReport:
    """Evaluate the four equivalent exactness criteria independently."""
    _require_domain(sa, L)
    tol = eps_eq() if tol is None else tol
    scale = max(L.norm(), 1.0)
    om = omega_form(sa, L)

    ok_i, res_i = _criterion_coboundary(sa, om, scale, tol)
    ok_ii, res_ii, v_ii = _criterion_potential(sa, om, scale, tol)
    skew_part = L - adjoint_gns(sa, L)
    ok_iii = is_derivation(skew_part, tol)
    res_iv = kms_residual(sa, symbol_functional(sa, L))
    ok_iv = res_iv <= tol * scale

    verdicts = {"coboundary": ok_i, "potential": ok_ii, "derivation": ok_iii, "kms": ok_iv}
    residuals = {"coboundary": res_i, "potential": res_ii, "kms": res_iv}
    if len(set(verdicts.values())) != 1:
        raise InternalInconsistency(f"exactness criteria disagree: {verdicts}, residuals {residuals}")
    v = None
    if ok_i:
        v = v_ii / 2
        v_iii = extract_inner_potential(sa, skew_part / 2)
        if fnorm(v - v_iii) > tol * max(fnorm(v), 1.0) * 10:
            raise InternalInconsistency("potentials from criteria (ii) and (iii) differ")
        if fnorm(commutator(v, sa.omega)) > tol * max(fnorm(v), 1.0):
            raise InternalInconsistency("recovered potential does not commute with the density matrix")
    return ExactnessReport(ok_i, v, verdicts, residuals)
