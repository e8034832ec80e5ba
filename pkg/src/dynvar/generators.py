"""Differential operators in D(A, rho): domain checks, ellipticity, momentum
spaces and their Laplacians, and random generator samplers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    EPS_PSD,
    StateAlgebra,
    Superoperator,
    ad,
    commutator,
    dag,
    eps_eq,
    fnorm,
    identity,
    is_small,
    matrix_units,
    rho,
    sandwich,
    vec,
    zero,
)
from .errors import (
    CommutantTooSmall,
    DomainViolation,
    InvalidMomentumSpace,
    InvalidPotential,
    NotADerivation,
    ReconstructionMismatch,
)
from .forms import (
    OneForm,
    kermu_matrix,
    pairing_matrix,
    star_permutation,
    symbol_functional,
)


# ---------------------------------------------------------------------------
# momentum spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MomentumSpace:
    """Real span of skew-adjoint momenta; ``basis`` is declared orthonormal."""

    n: int
    basis: tuple = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.basis)

    @property
    def stack(self) -> np.ndarray:
        if not self.basis:
            return np.zeros((0, self.n, self.n), dtype=complex)
        return np.stack(self.basis)

    def __repr__(self):
        return f"MomentumSpace(n={self.n}, m={self.m})"


def _real_coords(mats: np.ndarray) -> np.ndarray:
    """Rows are (Re vec, Im vec) of each matrix in the stack."""
    v = mats.reshape(mats.shape[0], -1)
    return np.concatenate([v.real, v.imag], axis=1)


def make_momentum_space(sa: StateAlgebra, basis: Sequence[np.ndarray]) -> MomentumSpace:
    eps = eps_eq()
    mats = [sa.check(p).copy() for p in basis]
    for k, p in enumerate(mats):
        scale = max(fnorm(p), 1.0)
        if fnorm(p + dag(p)) > eps * scale:
            raise InvalidMomentumSpace(f"momentum {k} is not skew-adjoint")
        if abs(rho(sa, p)) > eps * scale:
            raise InvalidMomentumSpace(f"momentum {k} has rho(p) != 0")
        if fnorm(commutator(p, sa.omega)) > eps * scale:
            raise InvalidMomentumSpace(f"momentum {k} does not commute with the density matrix")
    if mats:
        coords = _real_coords(np.stack(mats))
        if np.linalg.matrix_rank(coords, tol=1e-10 * np.abs(coords).max()) < len(mats):
            raise InvalidMomentumSpace("momenta are linearly dependent over the reals")
    return MomentumSpace(sa.n, tuple(mats))


def laplacian(sa: StateAlgebra, P) -> Superoperator:
    """Sum of D_k^2 over the orthonormal basis, D_k = [p_k, .]."""
    if not isinstance(P, MomentumSpace):
        P = make_momentum_space(sa, P)
    out = zero(sa.n)
    for p in P.basis:
        dk = ad(p)
        out = out + dk @ dk
    return out


def make_generator(sa: StateAlgebra, P, v) -> Superoperator:
    """L = laplacian(P) + [v, .]."""
    v = sa.check(v)
    eps = eps_eq()
    scale = max(fnorm(v), 1.0)
    if fnorm(v + dag(v)) > eps * scale:
        raise InvalidPotential("potential is not skew-adjoint")
    if abs(rho(sa, v)) > eps * scale:
        raise InvalidPotential("potential has rho(v) != 0")
    if fnorm(commutator(v, sa.omega)) > eps * scale:
        raise InvalidPotential("potential does not commute with the density matrix")
    return laplacian(sa, P) + ad(v)


# ---------------------------------------------------------------------------
# the domain D(A, rho)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    normalized: float
    divergence: float
    symmetry: float
    scale: float
    normalized_ok: bool
    divergence_ok: bool
    symmetry_ok: bool

    @property
    def ok(self) -> bool:
        return self.normalized_ok and self.divergence_ok and self.symmetry_ok

    def as_dict(self) -> dict:
        return {
            "normalized": self.normalized,
            "divergence": self.divergence,
            "symmetry": self.symmetry,
            "ok": self.ok,
        }


def symmetry_residual(L: Superoperator) -> float:
    e = matrix_units(L.n)
    img = L(e)
    return float(np.abs(L(np.swapaxes(e, 0, 1)) - dag(img)).max())


def in_domain(sa: StateAlgebra, L: Superoperator) -> ValidationReport:
    scale = L.norm()
    normalized = fnorm(L(np.eye(sa.n)))
    divergence = fnorm(sa.rho_row @ L.mat)
    symmetry = symmetry_residual(L)
    return ValidationReport(
        normalized=normalized,
        divergence=divergence,
        symmetry=symmetry,
        scale=scale,
        normalized_ok=is_small(normalized, scale),
        divergence_ok=is_small(divergence, scale),
        symmetry_ok=is_small(symmetry, scale),
    )


def _require_domain(sa, L):
    report = in_domain(sa, L)
    if not report.ok:
        raise DomainViolation(f"operator is not in D(A, rho): {report.as_dict()}")
    return report


def is_derivation(L: Superoperator, tol: float | None = None) -> bool:
    tol = eps_eq() if tol is None else tol
    n = L.n
    e = matrix_units(n).reshape(n * n, n, n)
    img = L(e)
    prod = np.einsum("aij,bjk->abik", e, e)
    res = L(prod) - np.einsum("aij,bjk->abik", img, e) - np.einsum("aij,bjk->abik", e, img)
    scale = max(L.norm(), 1.0)
    return fnorm(L(np.eye(n))) <= tol * scale and fnorm(res) <= tol * scale


def extract_inner_potential(sa: StateAlgebra, D: Superoperator) -> np.ndarray:
    """Skew-adjoint v with rho(v) = 0 and [v, .] = D for a symmetric derivation D."""
    if not is_derivation(D):
        raise NotADerivation("operator fails the Leibniz rule")
    scale = max(D.norm(), 1.0)
    if not is_small(symmetry_residual(D), scale):
        raise NotADerivation("derivation is not symmetric")
    e = matrix_units(sa.n)
    v0 = sum(D(e[j, 0]) @ e[0, j] for j in range(sa.n))
    v = (v0 - dag(v0)) / 2
    v = v - rho(sa, v) * np.eye(sa.n)
    if fnorm((ad(v) - D).mat) > eps_eq() * scale:
        raise ReconstructionMismatch("[v, .] does not reproduce the derivation")
    if is_small(fnorm(sa.rho_row @ D.mat), scale):
        if fnorm(commutator(v, sa.omega)) > eps_eq() * max(fnorm(v), 1.0):
            raise ReconstructionMismatch("divergence-free derivation with non-commuting potential")
    return v


# ---------------------------------------------------------------------------
# ellipticity
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EllipticityResult:
    verdict: bool
    min_eig: float
    witness: OneForm | None = None

    def __bool__(self):
        return self.verdict


def symbol_gram(sa: StateAlgebra, L: Superoperator) -> np.ndarray:
    """M[s, r] = -sigma_L(kappa_s^* kappa_r) over the orthonormal basis of ker(mu).

    For w = sum c_r kappa_r one has sigma_L(w^* w) = -c^H M c.
    """
    n = sa.n
    k = kermu_matrix(n)
    b = pairing_matrix(symbol_functional(sa, L))
    m = -(k[star_permutation(n)].conj().T @ b @ k)
    return (m + dag(m)) / 2


def _psd_verdict(eigs: np.ndarray, eps: float, scale: float = 0.0) -> bool:
    """min eigenvalue >= -eps * max(largest |eigenvalue|, scale)."""
    if not eigs.size:
        return True
    top = max(float(np.abs(eigs).max()), scale)
    return bool(eigs.min() >= -eps * top)


def is_elliptic_form(sa: StateAlgebra, L: Superoperator, eps_psd: float = EPS_PSD) -> EllipticityResult:
    """Ellipticity via the symbol: sigma_L(w^* w) <= 0 for all one-forms w."""
    _require_domain(sa, L)
    m = symbol_gram(sa, L)
    eigs, vecs = np.linalg.eigh(m)
    verdict = _psd_verdict(eigs, eps_psd, L.norm())
    witness = None
    if not verdict:
        c = vecs[:, 0]
        witness = OneForm(sa.n, (kermu_matrix(sa.n) @ c).reshape((sa.n,) * 4))
    return EllipticityResult(verdict, float(eigs.min()), witness)


def choi(L: Superoperator) -> np.ndarray:
    """J(L) = sum_ij E_ij (x) L(E_ij)."""
    n = L.n
    return L.images().transpose(0, 2, 1, 3).reshape(n * n, n * n)


def partial_transpose_first(j: np.ndarray, n: int) -> np.ndarray:
    return j.reshape(n, n, n, n).transpose(2, 1, 0, 3).reshape(n * n, n * n)


def entangled_projector(n: int) -> np.ndarray:
    """Q = 1 - |Omega><Omega| for the normalized maximally entangled vector."""
    omega = vec(np.eye(n)) / np.sqrt(n)
    return np.eye(n * n) - np.outer(omega, omega.conj())


# Fixed by agreement with the symbol test; see calibrate_ccp_convention.
CCP_CONVENTION = "plain"


def ccp_matrix(L: Superoperator, convention: str = CCP_CONVENTION) -> np.ndarray:
    j = choi(L)
    if convention == "partial_transpose":
        j = partial_transpose_first(j, L.n)
    elif convention != "plain":
        raise ValueError(f"unknown convention {convention!r}")
    q = entangled_projector(L.n)
    c = q @ j @ q
    return (c + dag(c)) / 2


def is_elliptic_ccp(sa: StateAlgebra, L: Superoperator, convention: str = CCP_CONVENTION,
                    eps_psd: float = EPS_PSD) -> bool:
    """Conditional complete positivity through the projected Choi matrix."""
    _require_domain(sa, L)
    return _psd_verdict(np.linalg.eigvalsh(ccp_matrix(L, convention)), eps_psd, L.norm())


def calibrate_ccp_convention(sa: StateAlgebra, generators: Sequence[Superoperator]) -> dict:
    """Count verdict agreements of each Choi convention with the symbol test."""
    reference = [is_elliptic_form(sa, L).verdict for L in generators]
    out = {}
    for conv in ("plain", "partial_transpose"):
        out[conv] = sum(is_elliptic_ccp(sa, L, conv) == r for L, r in zip(generators, reference))
    return out


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def eigenspace_blocks(sa: StateAlgebra, rtol: float = 1e-9) -> list[np.ndarray]:
    """Column blocks of the eigenbasis of omega, one per distinct eigenvalue."""
    lam = sa.h_eigvals
    blocks, start = [], 0
    for k in range(1, len(lam) + 1):
        if k == len(lam) or abs(lam[k] - lam[start]) > rtol * lam[0]:
            blocks.append(sa.h_eigbasis[:, start:k])
            start = k
    return blocks


def commutant_skew_dim(sa: StateAlgebra) -> int:
    """Real dimension of centered skew-adjoint matrices commuting with omega."""
    return sum(b.shape[1] ** 2 for b in eigenspace_blocks(sa)) - 1


def random_commutant_skew(sa: StateAlgebra, rng: np.random.Generator, centered: bool = True) -> np.ndarray:
    p = np.zeros((sa.n, sa.n), dtype=complex)
    for b in eigenspace_blocks(sa):
        k = b.shape[1]
        x = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
        p = p + b @ ((x - dag(x)) / 2) @ dag(b)
    if centered:
        p = p - rho(sa, p) * np.eye(sa.n)
    return p


def random_commutant_unitary(sa: StateAlgebra, rng: np.random.Generator) -> np.ndarray:
    import scipy.linalg

    return scipy.linalg.expm(random_commutant_skew(sa, rng, centered=False))


def random_momenta(sa: StateAlgebra, m: int, rng: np.random.Generator) -> list[np.ndarray]:
    """m centered momenta in the commutant, HS-orthogonalized and randomly rescaled."""
    dim = commutant_skew_dim(sa)
    if m > dim:
        raise CommutantTooSmall(f"requested {m} momenta but the commutant allows {dim}")
    out: list[np.ndarray] = []
    while len(out) < m:
        p = random_commutant_skew(sa, rng)
        for q in out:
            p = p - np.real(np.vdot(q, p)) * q
        nrm = fnorm(p)
        if nrm < 1e-8:
            continue
        out.append(p / nrm)
    return [p * rng.uniform(0.5, 1.5) for p in out]


@dataclass(frozen=True, eq=False)
class GroundTruth:
    momenta: tuple
    v: np.ndarray


@dataclass(frozen=True, eq=False)
class Sample:
    L: Superoperator
    kind: str
    ground_truth: GroundTruth | None = None


def shift_unitary(n: int) -> np.ndarray:
    """Cyclic permutation matrix e_i -> e_{i+1 mod n}."""
    return np.roll(np.eye(n), 1, axis=0).astype(complex)


def automorphism_generator(w: np.ndarray) -> Superoperator:
    """L(x) = w x w* - x."""
    w = np.asarray(w, dtype=complex)
    return sandwich(w, dag(w)) - identity(w.shape[0])


def _chain_generator(sa: StateAlgebra, rng: np.random.Generator, cycle: float) -> Superoperator:
    """Jump process between eigenvectors of omega with omega stationary.

    Rates r_ij (j -> i) are a reversible part s_ij / pi_j plus a circulation
    cycle / pi_i along i -> i + 1, so inflow equals outflow at every level.
    """
    n, u = sa.n, sa.h_eigbasis
    pi = sa.h_eigvals / sa.n
    s = rng.uniform(0.0, 1.0, size=(n, n))
    s = (s + s.T) / 2
    rates = s / pi[None, :]
    for i in range(n):
        rates[(i + 1) % n, i] += cycle / pi[i]
    np.fill_diagonal(rates, 0.0)
    e = matrix_units(n)
    out = zero(n)
    for i in range(n):
        for j in range(n):
            if rates[i, j] == 0.0:
                continue
            f_ji = u @ e[j, i] @ dag(u)
            f_jj = u @ e[j, j] @ dag(u)
            out = out + rates[i, j] * (sandwich(f_ji, dag(f_ji)) - 0.5 * (sandwich(f_jj, np.eye(n)) + sandwich(np.eye(n), f_jj)))
    return out


def _elliptic_generic(sa: StateAlgebra, rng: np.random.Generator) -> Superoperator:
    n = sa.n
    L = _chain_generator(sa, rng, cycle=rng.uniform(0.2, 1.0))
    for _ in range(rng.integers(1, 3)):
        w = random_commutant_unitary(sa, rng)
        L = L + rng.uniform(0.1, 1.0) * automorphism_generator(w)
    depol = Superoperator(n, np.outer(vec(np.eye(n)), sa.rho_row)) - identity(n)
    L = L + rng.uniform(0.0, 0.5) * depol
    mcount = min(int(rng.integers(0, 3)), commutant_skew_dim(sa))
    if mcount:
        L = L + laplacian(sa, random_momenta(sa, mcount, rng))
    return L + ad(random_commutant_skew(sa, rng))


def sample_generator(sa: StateAlgebra, m: int = 1, seed=None, kind: str = "exact") -> Sample:
    """Random generator in D(A, rho).

    ``exact``: laplacian(P) + [v, .] with ground truth (P, v);
    ``elliptic_generic``: a Lindblad-form generator preserving rho built from a
    non-reversible jump process, commutant automorphisms, depolarization and a
    random Laplacian and potential; ``nonexact_auto``: x -> W x W* - x for the
    cyclic shift W (tracial state only).
    """
    rng = np.random.default_rng(seed)
    if kind == "exact":
        momenta = random_momenta(sa, m, rng)
        v = random_commutant_skew(sa, rng) * rng.uniform(0.5, 1.5)
        L = make_generator(sa, momenta, v)
        return Sample(L, kind, GroundTruth(tuple(momenta), v))
    if kind == "elliptic_generic":
        return Sample(_elliptic_generic(sa, rng), kind)
    if kind == "nonexact_auto":
        if not sa.is_tracial:
            raise DomainViolation("nonexact_auto requires the tracial state")
        return Sample(automorphism_generator(shift_unitary(sa.n)), kind)
    raise ValueError(f"unknown kind {kind!r}")


def sample_domain_operator(sa: StateAlgebra, rng: np.random.Generator) -> Superoperator:
    """Random element of D(A, rho); generically neither elliptic nor exact."""
    n = sa.n
    x = rng.normal(size=(n * n, n * n)) + 1j * rng.normal(size=(n * n, n * n))
    L = Superoperator(n, x)
    e = matrix_units(n)
    img = L(e)
    # symmetrize: L_s(x) = (L(x) + L(x*)*)/2
    sym = (img + dag(L(np.swapaxes(e, 0, 1)))) / 2
    L = Superoperator(n, vec(sym.transpose(1, 0, 2, 3).reshape(n * n, n, n)).T)
    one_img = L(np.eye(n))
    L = L - Superoperator(n, np.outer(vec(one_img), sa.rho_row))
    return L - Superoperator(n, np.outer(vec(np.eye(n)), sa.rho_row @ L.mat))
