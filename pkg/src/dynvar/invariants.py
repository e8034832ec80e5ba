"""KMS metrics, momentum-space extraction, dynamical invariants and conjugacy.

A metric is stored through its kernel ``K``: the A-valued bilinear map with
``g(a dx dy) = rho(a K(x, y))``.  Every metric that arises from an exact
elliptic generator has the form ``K(x, y) = -sum_k [p_k, x][p_k, y]`` for an
orthonormal basis of a momentum space; :func:`decompose_metric` recovers that
basis from the Choi matrix of the associated Laplacian.

Choi-projection extraction
--------------------------
For ``Delta = sum_k ad(p_k)^2`` the first-order terms ``x -> p^2 x`` and
``x -> x p^2`` have Choi matrices supported on the maximally entangled vector,
so with ``Q = 1 - |Omega><Omega|``::

    C = Q J(Delta) Q / 2 = sum_k |vec(p~_k)><vec(p~_k)|,   p~ = p - tr(p)/n

The range of ``C`` is the complex span of the (trace-centered) momenta, its
skew-adjoint real form is the real span, and ``<vec q, C^+ vec p>`` is the
inner product that makes the original basis orthonormal.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .cohomology import exactness_report, kms_residual
from .core import (
    EPS_PSD,
    EPS_RANK,
    StateAlgebra,
    Superoperator,
    adjoint_gns,
    ad,
    commutator,
    dag,
    eps_eq,
    fnorm,
    from_images,
    matrix_units,
    rho,
    vec,
)
from .errors import (
    CommutantViolation,
    DimensionMismatch,
    NotElliptic,
    NotExact,
    NotKms,
    NotUnitary,
    ReconstructionMismatch,
    SingularPairing,
    SkewExtractionFailure,
)
from .forms import (
    TwoForm,
    kermu_matrix,
    metric_functional,
    pairing_matrix,
    star_permutation,
    theta_dxdy,
)
from .generators import (
    MomentumSpace,
    choi,
    eigenspace_blocks,
    entangled_projector,
    extract_inner_potential,
    is_elliptic_form,
    laplacian,
    make_momentum_space,
)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KmsMetric:
    """g(a dx dy) = rho(a K(x, y)); ``kernel[k, l, m, p] = K(E_kl, E_mp)``."""

    n: int
    kernel: np.ndarray = field(repr=False)

    def __post_init__(self):
        kernel = np.asarray(self.kernel, dtype=complex)
        if kernel.shape != (self.n,) * 6:
            raise DimensionMismatch(f"metric kernel has shape {kernel.shape}")
        object.__setattr__(self, "kernel", kernel)

    def K(self, x, y) -> np.ndarray:
        return np.einsum("kl,mp,klmpij->ij", np.asarray(x), np.asarray(y), self.kernel)

    def functional(self, sa: StateAlgebra) -> np.ndarray:
        return metric_functional(sa, self.kernel)

    def __call__(self, sa: StateAlgebra, xi: TwoForm) -> complex:
        return complex(np.sum(self.functional(sa) * xi.coeffs))

    def positivity_matrix(self, sa: StateAlgebra) -> np.ndarray:
        """H[s, r] = g(kappa_s^* kappa_r) over the orthonormal basis of ker(mu)."""
        k = kermu_matrix(self.n)
        h = k[star_permutation(self.n)].conj().T @ pairing_matrix(self.functional(sa)) @ k
        return (h + dag(h)) / 2

    def residuals(self, sa: StateAlgebra) -> dict:
        scale = max(fnorm(self.kernel), 1.0)
        eigs = np.linalg.eigvalsh(self.positivity_matrix(sa))
        top = max(float(np.abs(eigs).max()), 1.0)
        unit_left = fnorm(np.einsum("kkmpij->mpij", self.kernel))
        unit_right = fnorm(np.einsum("klmmij->klij", self.kernel))
        return {
            "min_eig": float(eigs.min()),
            "min_eig_relative": float(eigs.min()) / top,
            "kms": kms_residual(sa, self.functional(sa)) / scale,
            "unit": max(unit_left, unit_right) / scale,
        }

    def check(self, sa: StateAlgebra, eps_psd: float = EPS_PSD) -> "KmsMetric":
        if sa.n != self.n:
            raise DimensionMismatch("metric and state algebra differ in size")
        r = self.residuals(sa)
        eps = eps_eq()
        if r["unit"] > eps:
            raise NotKms("kernel does not vanish on the unit (not a functional on two-forms)")
        if r["min_eig_relative"] < -eps_psd:
            raise NotKms(f"metric is not positive (min eigenvalue {r['min_eig']:.3g})")
        if r["kms"] > eps:
            raise NotKms(f"KMS condition fails (residual {r['kms']:.3g})")
        return self

    def is_valid(self, sa: StateAlgebra) -> bool:
        try:
            self.check(sa)
        except NotKms:
            return False
        return True

    def scaled(self, s: float) -> "KmsMetric":
        return KmsMetric(self.n, s * self.kernel)

    def transported(self, u) -> "KmsMetric":
        """Metric g_u with g_u(a dx dy) = g(u* a u d(u* x u) d(u* y u))."""
        u = np.asarray(u, dtype=complex)
        uc = u.conj()
        k = np.einsum("ak,bl,cm,dp,klmpij->abcdij", uc, u, uc, u, self.kernel, optimize=True)
        return KmsMetric(self.n, u @ k @ dag(u))


def _unit_images(n: int) -> np.ndarray:
    return matrix_units(n).reshape(n * n, n, n)


def metric_from_momenta(sa: StateAlgebra, P) -> KmsMetric:
    """K(x, y) = -sum_k [p_k, x][p_k, y] for an orthonormal momentum basis."""
    if not isinstance(P, MomentumSpace):
        P = make_momentum_space(sa, P)
    n = sa.n
    e = _unit_images(n)
    k = np.zeros((n * n, n * n, n, n), dtype=complex)
    for p in P.basis:
        dp = p @ e - e @ p
        k -= np.einsum("xij,yjk->xyik", dp, dp)
    return KmsMetric(n, k.reshape((n,) * 6))


def metric_presented(sa: StateAlgebra, zs) -> KmsMetric:
    """K(x, y) = sum_k [z_k^*, x][z_k, y]; positive, KMS only for special z_k."""
    n = sa.n
    e = _unit_images(n)
    k = np.zeros((n * n, n * n, n, n), dtype=complex)
    for z in zs:
        z = sa.check(z)
        a = dag(z) @ e - e @ dag(z)
        b = z @ e - e @ z
        k += np.einsum("xij,yjk->xyik", a, b)
    return KmsMetric(n, k.reshape((n,) * 6))


def metric_from_generator(sa: StateAlgebra, L: Superoperator, *, check: bool = True) -> KmsMetric:
    """2g = -sigma_L, i.e. K(x, y) = -theta_L(dx dy) / 2.

    With ``check`` the ellipticity and exactness gates run first and the
    resulting metric is validated.
    """
    if check:
        if not is_elliptic_form(sa, L):
            raise NotElliptic("generator is not elliptic")
        if not exactness_report(sa, L).exact:
            raise NotExact("generator is not exact; its symbol is not a KMS metric")
    g = KmsMetric(sa.n, -0.5 * theta_dxdy(L))
    if check:
        g.check(sa)
    return g


def reconstruct_laplacian(sa: StateAlgebra, g: KmsMetric) -> Superoperator:
    """Solve rho(Delta(x) y) = g(dx dy) for Delta, one basis element x at a time.

    With y = E_ij the left side is (omega Delta(x))[j, i], so
    Delta(x) = omega^{-1} G(x)^T where G(x)[i, j] = rho(K(x, E_ij)).
    """
    if g.n != sa.n:
        raise DimensionMismatch("metric and state algebra differ in size")
    if np.linalg.cond(sa.omega) > 1e14:
        raise SingularPairing("the trace pairing with rho is numerically singular")
    gmat = np.einsum("ab,klijba->klij", sa.omega, g.kernel)
    images = np.linalg.solve(sa.omega, np.swapaxes(gmat, -1, -2))
    return from_images(images)


# ---------------------------------------------------------------------------
# decomposition
# ---------------------------------------------------------------------------

def extraction_matrix(L: Superoperator) -> np.ndarray:
    """C = Q J(L) Q / 2, Hermitian part."""
    q = entangled_projector(L.n)
    c = q @ choi(L) @ q / 2
    return (c + dag(c)) / 2


def _skew_real_form(mats: np.ndarray) -> np.ndarray:
    """Real basis of {sum_j c_j X_j skew-adjoint : c complex} as a matrix stack."""
    r = mats.shape[0]
    if r == 0:
        return mats
    herm_re = mats + dag(mats)            # coefficient a_j (real part)
    herm_im = 1j * (mats - dag(mats))     # coefficient b_j (imaginary part)
    cols = np.concatenate([herm_re, herm_im]).reshape(2 * r, -1).T
    real_system = np.concatenate([cols.real, cols.imag])
    ns = scipy.linalg.null_space(real_system, rcond=1e-9)
    coeffs = ns[:r] + 1j * ns[r:]
    return np.einsum("jk,jab->kab", coeffs, mats)


def decompose_metric(sa: StateAlgebra, g: KmsMetric, *, perm=None, eps_rank: float = EPS_RANK,
                     eps_psd: float = EPS_PSD, validate: bool = True) -> MomentumSpace:
    """Orthonormal momentum basis with g(a dx dy) = -sum_k rho(a [p_k, x][p_k, y]).

    ``perm`` permutes the coordinates handed to the eigensolver (the result is
    unique only up to a real orthogonal change of basis).
    """
    n = sa.n
    if validate:
        g.check(sa, eps_psd)
    delta_op = reconstruct_laplacian(sa, g)
    c = extraction_matrix(delta_op)
    if perm is not None:
        perm = np.asarray(perm)
        c = c[np.ix_(perm, perm)]
    lam, vecs = np.linalg.eigh(c)
    order = np.argsort(lam)[::-1]
    lam, vecs = lam[order], vecs[:, order]
    if perm is not None:
        restored = np.empty_like(vecs)
        restored[perm] = vecs
        vecs = restored
    if fnorm(g.kernel) <= eps_eq():
        return MomentumSpace(n, ())
    top = float(np.abs(lam).max())
    if lam.min() < -eps_psd * top:
        raise NotKms(f"extraction matrix is not positive (min eigenvalue {lam.min():.3g})")
    keep = lam > eps_rank * top
    rank = int(keep.sum())
    lam_r, u_r = lam[keep], vecs[:, keep]
    range_mats = np.swapaxes(u_r.T.reshape(rank, n, n), -1, -2)

    skew = _skew_real_form(range_mats)
    if skew.shape[0] != rank:
        raise SkewExtractionFailure(f"real skew-adjoint subspace has dimension {skew.shape[0]}, rank is {rank}")

    # <p, q>_P = <vec q, C^+ vec p>, computed in the eigenbasis of the range
    coords = u_r.conj().T @ vec(skew).T                 # rank x rank
    gram = coords.conj().T @ (coords / lam_r[:, None])
    if fnorm(gram.imag) > 1e-8 * fnorm(gram):
        raise SkewExtractionFailure("inner product on the skew subspace is not real")
    gram = (gram.real + gram.real.T) / 2
    w, o = np.linalg.eigh(gram)
    if w.min() <= 0:
        raise SkewExtractionFailure("inner product on the skew subspace is not positive definite")
    inv_sqrt = (o / np.sqrt(w)) @ o.T
    basis = np.einsum("jk,jab->kab", inv_sqrt, skew)
    basis = np.stack([p - rho(sa, p) * np.eye(n) for p in basis])

    eps = eps_eq()
    for p in basis:
        if fnorm(commutator(p, sa.omega)) > eps * max(fnorm(p), 1.0):
            raise CommutantViolation("extracted momentum does not commute with the density matrix")
    P = make_momentum_space(sa, list(basis))
    residual = fnorm(metric_from_momenta(sa, P).kernel - g.kernel)
    if residual > eps * max(fnorm(g.kernel), 1.0):
        raise NotKms(f"metric is not of momentum-space form (residual {residual:.3g})")
    return P


# ---------------------------------------------------------------------------
# dynamical invariants
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DynamicalInvariant:
    P: MomentumSpace
    v: np.ndarray
    provenance: str = ""

    @property
    def m(self) -> int:
        return self.P.m


def generator_hash(L: Superoperator) -> str:
    return hashlib.sha256(np.ascontiguousarray(L.mat).tobytes()).hexdigest()[:16]


def extract_invariant(sa: StateAlgebra, L: Superoperator) -> DynamicalInvariant:
    """L = laplacian(P) + [v, .] with (P, v) unique up to orthogonal change of basis."""
    if not is_elliptic_form(sa, L):
        raise NotElliptic("generator is not elliptic")
    if not exactness_report(sa, L).exact:
        raise NotExact("generator is not exact")
    adj = adjoint_gns(sa, L)
    delta_op = (L + adj) / 2
    v = extract_inner_potential(sa, (L - adj) / 2)
    P = decompose_metric(sa, metric_from_generator(sa, delta_op, check=False))
    recon = laplacian(sa, P) + ad(v)
    res = fnorm(recon.mat - L.mat)
    if res > eps_eq() * max(L.norm(), 1.0):
        raise ReconstructionMismatch(f"laplacian(P) + ad(v) differs from L by {res:.3g}")
    return DynamicalInvariant(P, v, generator_hash(L))


def transport_invariant(inv: DynamicalInvariant, u) -> DynamicalInvariant:
    """Image of an invariant under Ad(u)."""
    u = np.asarray(u, dtype=complex)
    P = MomentumSpace(inv.P.n, tuple(u @ p @ dag(u) for p in inv.P.basis))
    return DynamicalInvariant(P, u @ inv.v @ dag(u), inv.provenance)


def _iota_stack(P: MomentumSpace) -> np.ndarray:
    """Columns vec(p - tr(p)/n) for the basis of P."""
    n = P.n
    if P.m == 0:
        return np.zeros((n * n, 0), dtype=complex)
    s = P.stack
    tr = np.trace(s, axis1=1, axis2=2) / n
    return vec(s - tr[:, None, None] * np.eye(n)).T


def extraction_matrix_of(P: MomentumSpace) -> np.ndarray:
    v = _iota_stack(P)
    return v @ v.conj().T


def iota_projection(P: MomentumSpace) -> np.ndarray:
    """Orthogonal projector onto the complex span of vec(p_k)."""
    n = P.n
    if P.m == 0:
        return np.zeros((n * n, n * n), dtype=complex)
    q = scipy.linalg.orth(vec(P.stack).T)
    return q @ q.conj().T


def projection_distance(P1: MomentumSpace, P2: MomentumSpace) -> float:
    return fnorm(iota_projection(P1) - iota_projection(P2))


def orthogonal_relation(P1: MomentumSpace, P2: MomentumSpace) -> tuple[np.ndarray, float]:
    """Real O with p2_k = sum_j O[k, j] p1_j; residual covers fit and orthogonality."""
    if P1.m != P2.m:
        return np.zeros((P2.m, P1.m)), np.inf
    if P1.m == 0:
        return np.zeros((0, 0)), 0.0
    a = np.concatenate([vec(P1.stack).real, vec(P1.stack).imag], axis=1)   # m x 2n^2
    b = np.concatenate([vec(P2.stack).real, vec(P2.stack).imag], axis=1)
    o = np.linalg.lstsq(a.T, b.T, rcond=None)[0].T
    fit = fnorm(o @ a - b)
    orth = fnorm(o @ o.T - np.eye(P1.m))
    return o, max(fit, orth)


# ---------------------------------------------------------------------------
# fingerprints and conjugacy
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Fingerprint:
    m: int
    spec_v: np.ndarray
    spec_q: np.ndarray
    spec_C: np.ndarray
    spec_omega: np.ndarray

    def as_dict(self) -> dict:
        return {
            "m": self.m,
            "spec_v": self.spec_v.tolist(),
            "spec_q": self.spec_q.tolist(),
            "spec_C": self.spec_C.tolist(),
            "spec_omega": self.spec_omega.tolist(),
        }

    def matches(self, other: "Fingerprint", tol: float = 1e-8) -> bool:
        if self.m != other.m:
            return False
        for name in ("spec_v", "spec_q", "spec_C", "spec_omega"):
            a, b = getattr(self, name), getattr(other, name)
            if a.shape != b.shape:
                return False
            scale = max(float(np.abs(a).max(initial=0.0)), float(np.abs(b).max(initial=0.0)), 1.0)
            if a.size and np.abs(a - b).max() > tol * scale:
                return False
        return True


def fingerprint(inv: DynamicalInvariant, sa: StateAlgebra) -> Fingerprint:
    """Spectral data preserved by every rho-preserving conjugacy (necessary, not sufficient)."""
    n = sa.n
    spec_v = np.sort(np.linalg.eigvals(inv.v).imag)
    q = sum((p @ p for p in inv.P.basis), np.zeros((n, n), dtype=complex))
    spec_q = np.sort(np.linalg.eigvalsh((q + dag(q)) / 2))
    iota = _iota_stack(inv.P)
    spec_c = np.sort(np.linalg.eigvalsh(iota.conj().T @ iota)) if inv.m else np.zeros(0)
    spec_omega = np.sort(sa.h_eigvals / n)
    return Fingerprint(inv.m, spec_v, spec_q, spec_c, spec_omega)


def conjugacy_residuals(sa: StateAlgebra, inv1: DynamicalInvariant, inv2: DynamicalInvariant, u) -> dict:
    u = np.asarray(u, dtype=complex)
    if u.shape != (sa.n, sa.n):
        raise DimensionMismatch("certificate has the wrong size")
    unit = fnorm(dag(u) @ u - np.eye(sa.n))
    if unit > eps_eq() * sa.n:
        raise NotUnitary(f"certificate is not unitary (residual {unit:.3g})")
    moved = transport_invariant(inv1, u)
    out = {
        "commutant": fnorm(commutator(u, sa.omega)),
        "potential": fnorm(moved.v - inv2.v) / max(fnorm(inv2.v), 1.0),
    }
    if inv1.m != inv2.m:
        out["span"] = np.inf
        out["inner_product"] = np.inf
        return out
    out["span"] = projection_distance(moved.P, inv2.P)
    out["inner_product"] = orthogonal_relation(moved.P, inv2.P)[1]
    return out


def check_conjugacy(sa: StateAlgebra, inv1: DynamicalInvariant, inv2: DynamicalInvariant, u,
                    tol: float | None = None) -> bool:
    """Does Ad(u) carry (P1, <.,.>, v1) onto (P2, <.,.>, v2) and preserve rho?"""
    tol = eps_eq() if tol is None else tol
    return all(r <= tol for r in conjugacy_residuals(sa, inv1, inv2, u).values())


@dataclass(frozen=True, eq=False)
class SearchResult:
    status: str                     # "conjugate", "not_conjugate" or "inconclusive"
    u: np.ndarray | None = None
    restarts: int = 0
    best_objective: float = np.inf
    reason: str = ""

    def as_dict(self) -> dict:
        out = {"status": self.status, "restarts": self.restarts,
               "best_objective": self.best_objective, "reason": self.reason}
        if self.u is not None:
            out["u"] = [[[float(z.real), float(z.imag)] for z in row] for row in self.u]
        return out


def commutant_skew_basis(sa: StateAlgebra) -> list[np.ndarray]:
    """Real basis of the skew-adjoint matrices commuting with omega."""
    out = []
    for b in eigenspace_blocks(sa):
        d = b.shape[1]
        for j in range(d):
            for k in range(j, d):
                e = np.zeros((d, d), dtype=complex)
                if j == k:
                    e[j, j] = 1j
                    out.append(b @ e @ dag(b))
                    continue
                e[j, k], e[k, j] = 1, -1
                out.append(b @ e @ dag(b))
                e[j, k], e[k, j] = 1j, 1j
                out.append(b @ e @ dag(b))
    return out


def search_conjugacy(sa: StateAlgebra, inv1: DynamicalInvariant, inv2: DynamicalInvariant,
                     budget: int = 100, seed=0, tol: float | None = None) -> SearchResult:
    """Best-effort search for a certificate u in the commutant of omega.

    Distinct fingerprints prove non-conjugacy; otherwise random restarts
    minimize ||U C1 U^H - C2||^2 + ||u v1 u* - v2||^2 with U = conj(u) (x) u.
    Only certificates that pass :func:`check_conjugacy` are returned.
    """
    tol = eps_eq() if tol is None else tol
    if not fingerprint(inv1, sa).matches(fingerprint(inv2, sa)):
        return SearchResult("not_conjugate", reason="fingerprints differ")
    c1, c2 = extraction_matrix_of(inv1.P), extraction_matrix_of(inv2.P)
    v1, v2 = inv1.v, inv2.v
    basis = np.stack(commutant_skew_basis(sa))
    rng = np.random.default_rng(seed)

    def unitary(theta):
        return scipy.linalg.expm(np.einsum("j,jab->ab", theta, basis))

    def residual(theta):
        u = unitary(theta)
        big = np.kron(u.conj(), u)
        r = np.concatenate([(big @ c1 @ dag(big) - c2).ravel(), (u @ v1 @ dag(u) - v2).ravel()])
        return np.concatenate([r.real, r.imag])

    best = np.inf
    for attempt in range(1, budget + 1):
        theta0 = rng.uniform(-np.pi, np.pi, size=len(basis))
        res = scipy.optimize.least_squares(residual, theta0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        objective = float(np.sum(res.fun ** 2))
        best = min(best, objective)
        u = unitary(res.x)
        if check_conjugacy(sa, inv1, inv2, u, tol):
            return SearchResult("conjugate", u, attempt, objective)
    return SearchResult("inconclusive", None, budget, best, "no certificate found within budget")
