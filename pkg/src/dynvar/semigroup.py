"""Markov semigroups exp(tL): axioms at sampled times, long-time limits, and
compression to the support corner of a non-faithful invariant state."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np
import scipy.linalg

from .core import (
    EPS_PSD,
    EPS_RANK,
    StateAlgebra,
    Superoperator,
    dag,
    eps_eq,
    fnorm,
    identity,
    make_state_algebra,
    vec,
)
from .errors import DimensionMismatch, NegativeTime, NotAState, StateNotInvariant
from .generators import _require_domain, choi

DEFAULT_TIMES = (0.1, 0.7, 1.3)


def evolve(sa: StateAlgebra, L: Superoperator, t: float) -> Superoperator:
    """phi_t = exp(tL) (scaling and squaring with a Pade approximant)."""
    if L.n != sa.n:
        raise DimensionMismatch("generator and state algebra differ in size")
    t = float(t)
    if t < 0:
        raise NegativeTime(f"t = {t} < 0")
    if t == 0:
        return identity(sa.n)
    return Superoperator(sa.n, scipy.linalg.expm(t * L.mat))


# ---------------------------------------------------------------------------
# Markov axioms
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EvolutionReport:
    times: list
    unitality: list
    invariance: list
    cp: list
    semigroup: list = field(default_factory=list)   # (s, t, residual)

    def ok(self, tol: float = 1e-8, eps_psd: float = EPS_PSD) -> bool:
        return (
            all(r <= tol for r in self.unitality)
            and all(r <= tol for r in self.invariance)
            and all(c >= -eps_psd for c in self.cp)
            and all(r <= tol for _, _, r in self.semigroup)
        )

    def failures(self, tol: float = 1e-8, eps_psd: float = EPS_PSD) -> dict:
        return {
            "unitality": [t for t, r in zip(self.times, self.unitality) if r > tol],
            "invariance": [t for t, r in zip(self.times, self.invariance) if r > tol],
            "cp": [t for t, c in zip(self.times, self.cp) if c < -eps_psd],
            "semigroup": [(s, t) for s, t, r in self.semigroup if r > tol],
        }

    def as_dict(self) -> dict:
        return {
            "times": list(self.times),
            "unitality": list(self.unitality),
            "invariance": list(self.invariance),
            "cp": list(self.cp),
            "semigroup": [list(x) for x in self.semigroup],
            "ok": self.ok(),
        }


def min_choi_eig(phi: Superoperator) -> float:
    j = choi(phi)
    return float(np.linalg.eigvalsh((j + dag(j)) / 2).min())


def markov_checks(sa: StateAlgebra, L: Superoperator, times: Sequence[float] = DEFAULT_TIMES) -> EvolutionReport:
    """Unitality, rho-invariance, complete positivity and the semigroup law."""
    times = [float(t) for t in times]
    n = sa.n
    one = vec(np.eye(n))
    flows = {t: evolve(sa, L, t) for t in times}
    unitality, invariance, cp = [], [], []
    for t in times:
        phi = flows[t]
        unitality.append(fnorm(phi.mat @ one - one))
        invariance.append(fnorm(sa.rho_row @ phi.mat - sa.rho_row))
        cp.append(min_choi_eig(phi))
    law = []
    for s, t in combinations_with_replacement(times, 2):
        law.append((s, t, fnorm((flows[s] @ flows[t]).mat - evolve(sa, L, s + t).mat)))
    return EvolutionReport(times, unitality, invariance, cp, law)


# ---------------------------------------------------------------------------
# long-time behaviour
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MixingReport:
    spectrum: np.ndarray
    peripheral: list
    limit_exists: bool
    limit: Superoperator | None
    gap: float

    def as_dict(self) -> dict:
        return {
            "spectrum": [[float(z.real), float(z.imag)] for z in self.spectrum],
            "peripheral": [[float(z.real), float(z.imag)] for z in self.peripheral],
            "limit_exists": self.limit_exists,
            "gap": self.gap if np.isfinite(self.gap) else None,
        }


def mixing_analysis(sa: StateAlgebra, L: Superoperator) -> MixingReport:
    """lim_{t -> oo} exp(tL) exists iff the only eigenvalue on the imaginary
    axis is a semisimple 0; the limit is the projection onto ker L along ran L."""
    _require_domain(sa, L)
    n2 = L.n ** 2
    spectrum = np.linalg.eigvals(L.mat)
    spectrum = spectrum[np.lexsort((spectrum.imag, -spectrum.real))]
    norm = L.norm()
    tol = 1e-9 * norm
    peripheral = [z for z in spectrum if abs(z.real) <= tol]
    interior = [z for z in spectrum if abs(z.real) > tol]
    gap = float(-max(z.real for z in interior)) if interior else np.inf
    zero_alg = sum(1 for z in peripheral if abs(z) <= tol)
    only_zero = zero_alg == len(peripheral)
    zero_geo = n2 - np.linalg.matrix_rank(L.mat, tol=max(tol, EPS_RANK * norm)) if norm > 0 else n2
    exists = bool(only_zero and zero_geo == zero_alg)
    limit = None
    if exists:
        if norm == 0:
            limit = identity(L.n)
        else:
            r = scipy.linalg.null_space(L.mat, rcond=tol / norm)
            w = scipy.linalg.null_space(dag(L.mat), rcond=tol / norm)
            limit = Superoperator(L.n, r @ np.linalg.solve(dag(w) @ r, dag(w)))
    return MixingReport(spectrum, peripheral, exists, limit, gap)


# ---------------------------------------------------------------------------
# compression to the support of an invariant state
# ---------------------------------------------------------------------------

def _support(n: int, omega_state) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(omega_state, dtype=complex)
    if w.shape != (n, n):
        raise DimensionMismatch(f"state has shape {w.shape}, expected ({n}, {n})")
    eps = eps_eq()
    if fnorm(w - dag(w)) > eps * max(fnorm(w), 1.0):
        raise NotAState("density matrix is not Hermitian")
    w = (w + dag(w)) / 2
    if abs(np.trace(w) - 1) > eps:
        raise NotAState(f"trace is {np.trace(w)}")
    lam, u = np.linalg.eigh(w)
    if lam.min() < -EPS_PSD * lam.max():
        raise NotAState(f"density matrix is not positive (min eigenvalue {lam.min():.3g})")
    keep = lam > EPS_RANK * lam.max()
    if keep.all():
        return w, np.eye(n, dtype=complex)
    return w, u[:, keep]


def support_projection(sa_big: StateAlgebra, omega_state) -> np.ndarray:
    """Smallest projection p with omega(1 - p) = 0."""
    _, v = _support(sa_big.n, omega_state)
    return v @ dag(v)


def compress_map(T: Superoperator, v: np.ndarray) -> Superoperator:
    """a -> V* T(V a V*) V for an isometry V."""
    left = np.kron(v.T, dag(v))
    right = np.kron(v.conj(), v)
    return Superoperator(v.shape[1], left @ T.mat @ right)


@dataclass(frozen=True, eq=False)
class CompressionResult:
    isometry: np.ndarray
    support: np.ndarray
    L_corner: Superoperator
    rho_corner: np.ndarray
    sa_corner: StateAlgebra
    monotonicity: list        # (t, min eigenvalue of phi_t(p0) - p0)
    semigroup_deviation: float

    @property
    def monotone(self) -> bool:
        return all(m >= -EPS_PSD for _, m in self.monotonicity)

    def as_dict(self) -> dict:
        return {
            "rank": int(self.isometry.shape[1]),
            "monotonicity": [list(x) for x in self.monotonicity],
            "monotone": self.monotone,
            "semigroup_deviation": self.semigroup_deviation,
        }


def compress(sa_big: StateAlgebra, L_big: Superoperator, omega_state,
             times: Sequence[float] = DEFAULT_TIMES) -> CompressionResult:
    """Compress exp(tL) to the corner p0 A p0 of the support of an invariant state.

    Monotonicity phi_t(p0) >= p0 and the corner semigroup law are measured and
    reported, not assumed; both hold when the flow is multiplicative.
    """
    n = sa_big.n
    w, v = _support(n, omega_state)
    p0 = v @ dag(v)
    row = vec(w.T)
    flows = {}
    for t in sorted({float(t) for t in times} | {float(s + t) for s in times for t in times}):
        phi = evolve(sa_big, L_big, t)
        if fnorm(row @ phi.mat - row) > eps_eq() * max(phi.norm(), 1.0):
            raise StateNotInvariant(f"state is not invariant at t = {t}")
        flows[t] = phi
    monotonicity = []
    for t in times:
        diff = flows[float(t)](p0) - p0
        monotonicity.append((float(t), float(np.linalg.eigvalsh((diff + dag(diff)) / 2).min())))
    comp = {t: compress_map(phi, v) for t, phi in flows.items()}
    deviation = 0.0
    for s in times:
        for t in times:
            lhs = comp[float(s)] @ comp[float(t)]
            deviation = max(deviation, fnorm(lhs.mat - comp[float(s + t)].mat))
    rho_corner = dag(v) @ w @ v
    rho_corner = (rho_corner + dag(rho_corner)) / 2
    sa_corner = make_state_algebra(v.shape[1], rho_corner / np.trace(rho_corner).real)
    return CompressionResult(v, p0, compress_map(L_big, v), rho_corner, sa_corner, monotonicity, deviation)
