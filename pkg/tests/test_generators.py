import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynvar.core import (
    ad,
    adjoint_gns,
    fnorm,
    left_mult,
    make_state_algebra,
    matrix_units,
    rho,
    tracial,
    zero,
)
from dynvar.errors import (
    CommutantTooSmall,
    DomainViolation,
    InvalidMomentumSpace,
    InvalidPotential,
    NotADerivation,
)
from dynvar.forms import d, star1, symbol, wedge
from dynvar.generators import (
    automorphism_generator,
    calibrate_ccp_convention,
    commutant_skew_dim,
    extract_inner_potential,
    in_domain,
    is_derivation,
    is_elliptic_ccp,
    is_elliptic_form,
    laplacian,
    make_generator,
    make_momentum_space,
    random_commutant_skew,
    random_momenta,
    sample_domain_operator,
    sample_generator,
    shift_unitary,
)
from dynvar.semigroup import evolve

from conftest import random_matrix

seeds = st.integers(min_value=0, max_value=2**32 - 1)
DEPHASING_P = np.diag([1j, -1j])


class TestInDomain:
    def test_derivation(self, sa, rng):
        assert in_domain(sa, ad(random_commutant_skew(sa, rng))).ok

    def test_left_multiplication(self):
        report = in_domain(tracial(2), left_mult(np.diag([1.0, 0.0])))
        assert not report.normalized_ok
        assert not report.ok

    def test_laplacian(self, sa, rng):
        assert in_domain(sa, laplacian(sa, random_momenta(sa, 1, rng))).ok

    def test_non_invariant_derivation(self):
        # a derivation whose potential does not commute with omega breaks divergence zero
        sa = make_state_algebra(2, np.diag([2 / 3, 1 / 3]))
        w = np.array([[0, 1], [-1, 0]], dtype=complex)
        report = in_domain(sa, ad(w))
        assert report.normalized_ok and report.symmetry_ok and not report.divergence_ok


class TestMomentumSpace:
    def test_valid(self, sa, rng):
        P = make_momentum_space(sa, random_momenta(sa, 1, rng))
        assert P.m == 1

    def test_not_skew(self):
        with pytest.raises(InvalidMomentumSpace):
            make_momentum_space(tracial(2), [np.diag([1.0, -1.0])])

    def test_not_centered(self):
        with pytest.raises(InvalidMomentumSpace):
            make_momentum_space(tracial(2), [np.diag([1j, 1j])])

    def test_not_commuting(self):
        sa = make_state_algebra(2, np.diag([2 / 3, 1 / 3]))
        with pytest.raises(InvalidMomentumSpace):
            make_momentum_space(sa, [np.array([[0, 1], [-1, 0]], dtype=complex)])

    def test_dependent(self):
        with pytest.raises(InvalidMomentumSpace):
            make_momentum_space(tracial(2), [DEPHASING_P, 2 * DEPHASING_P])


class TestLaplacian:
    def test_dephasing(self):
        e = matrix_units(2)
        D = laplacian(tracial(2), [DEPHASING_P])
        assert np.allclose(D(e[0, 1]), -4 * e[0, 1])
        assert np.allclose(D(e[0, 0]), 0)

    def test_empty(self, sa):
        assert np.allclose(laplacian(sa, []).mat, 0)

    def test_basis_independence(self, rng):
        sa = tracial(3)
        momenta = np.stack(random_momenta(sa, 3, rng))
        # orthonormality is declared, so rotating an orthonormal basis keeps Delta
        q = np.linalg.qr(rng.normal(size=(3, 3)))[0]
        rotated = np.einsum("kj,jab->kab", q, momenta)
        assert fnorm(laplacian(sa, list(momenta)).mat - laplacian(sa, list(rotated)).mat) <= 1e-10

    def test_symbol_of_laplacian_on_dxdy(self, sa, rng):
        D = laplacian(sa, random_momenta(sa, 1, rng))
        e = matrix_units(sa.n).reshape(-1, sa.n, sa.n)
        for x in e[::2]:
            for y in e[1::2]:
                lhs = symbol(sa, D, wedge(d(x), d(y)))
                assert abs(lhs + 2 * rho(sa, D(x) @ y)) <= 1e-9


class TestMakeGenerator:
    def test_pure_potential(self):
        sa = tracial(2)
        L = make_generator(sa, [], DEPHASING_P)
        assert np.allclose(L.mat, ad(DEPHASING_P).mat)
        phi = evolve(sa, L, 0.8)
        rng = np.random.default_rng(0)
        x, y = random_matrix(rng, 2), random_matrix(rng, 2)
        assert np.allclose(phi(x @ y), phi(x) @ phi(y))

    def test_dephasing(self):
        sa = tracial(2)
        assert np.allclose(make_generator(sa, [DEPHASING_P], np.zeros((2, 2))).mat,
                           laplacian(sa, [DEPHASING_P]).mat)

    def test_random_n3(self, rng):
        sa = make_state_algebra(3, np.diag([0.5, 0.25, 0.25]))
        L = make_generator(sa, random_momenta(sa, 2, rng), random_commutant_skew(sa, rng))
        assert in_domain(sa, L).ok
        assert is_elliptic_form(sa, L)

    @pytest.mark.parametrize("v", [np.diag([1.0, -1.0]), np.diag([1j, 1j])])
    def test_invalid_potential(self, v):
        with pytest.raises(InvalidPotential):
            make_generator(tracial(2), [], v)

    def test_invalid_potential_commutant(self):
        sa = make_state_algebra(2, np.diag([2 / 3, 1 / 3]))
        with pytest.raises(InvalidPotential):
            make_generator(sa, [], np.array([[0, 1], [-1, 0]], dtype=complex))

    def test_symmetric_and_skew_parts(self, sa, rng):
        s = sample_generator(sa, 1, int(rng.integers(1 << 30)))
        L, gt = s.L, s.ground_truth
        adj = adjoint_gns(sa, L)
        scale = L.norm()
        assert fnorm(((L + adj) / 2 - laplacian(sa, list(gt.momenta))).mat) <= 1e-9 * scale
        assert fnorm(((L - adj) / 2 - ad(gt.v)).mat) <= 1e-9 * scale


class TestEllipticity:
    def test_generator_is_elliptic(self, sa, rng):
        L = sample_generator(sa, 1, int(rng.integers(1 << 30))).L
        result = is_elliptic_form(sa, L)
        assert result.verdict and result.witness is None

    def test_negative_laplacian(self, sa, rng):
        L = -laplacian(sa, random_momenta(sa, 1, rng))
        result = is_elliptic_form(sa, L)
        assert not result.verdict
        w = result.witness
        assert symbol(sa, L, wedge(star1(w), w)).real > 1e-10

    def test_zero(self, sa):
        assert is_elliptic_form(sa, zero(sa.n)).verdict
        assert is_elliptic_ccp(sa, zero(sa.n))

    def test_domain_violation(self):
        with pytest.raises(DomainViolation):
            is_elliptic_form(tracial(2), left_mult(np.diag([1.0, 0.0])))
        with pytest.raises(DomainViolation):
            is_elliptic_ccp(tracial(2), left_mult(np.diag([1.0, 0.0])))

    def test_ccp_cyclic_shift(self):
        sa = tracial(3)
        assert is_elliptic_ccp(sa, automorphism_generator(shift_unitary(3)))
        assert is_elliptic_form(sa, automorphism_generator(shift_unitary(3)))

    def test_ccp_derivation(self, sa, rng):
        assert is_elliptic_ccp(sa, ad(random_commutant_skew(sa, rng)))

    def test_calibration_prefers_plain(self, rng):
        sa = tracial(2)
        gens = []
        for k in range(20):
            L = sample_generator(sa, 1 + k % 3, k).L
            gens += [L, -L, sample_domain_operator(sa, rng)]
        counts = calibrate_ccp_convention(sa, gens)
        assert counts["plain"] == len(gens)
        assert counts["partial_transpose"] < len(gens)


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from(["tracial2", "diag2", "tracial3", "diag3"]),
       st.sampled_from(["exact", "negated", "generic", "domain"]))
def test_oracle_agreement_property(seed, state, kind):
    from conftest import STATES

    sa = STATES[state]()
    rng = np.random.default_rng(seed)
    m = min(int(rng.integers(1, 4)), commutant_skew_dim(sa))
    if kind == "exact":
        L = sample_generator(sa, m, seed).L
    elif kind == "negated":
        L = -laplacian(sa, random_momenta(sa, m, rng))
    elif kind == "generic":
        L = sample_generator(sa, seed=seed, kind="elliptic_generic").L
    else:
        L = sample_domain_operator(sa, rng)
    assert is_elliptic_form(sa, L).verdict == is_elliptic_ccp(sa, L)


class TestDerivations:
    def test_inner(self, rng):
        assert is_derivation(ad(random_matrix(rng, 3)))

    def test_laplacian_fails_leibniz(self):
        D = laplacian(tracial(2), [DEPHASING_P])
        e = matrix_units(2)
        x, y = e[0, 1], e[1, 0]
        # at x = y = E12 every term vanishes (E12^2 = 0); the pair (E12, E21) detects it
        assert np.allclose(D(x @ x) - D(x) @ x - x @ D(x), 0)
        assert np.allclose(D(x @ y) - D(x) @ y - x @ D(y), 8 * e[0, 0])
        assert not is_derivation(D)

    def test_zero(self):
        assert is_derivation(zero(2))


class TestInnerPotential:
    def test_zero(self, sa):
        assert np.allclose(extract_inner_potential(sa, zero(sa.n)), 0)

    def test_hand_example(self):
        sa = tracial(2)
        D = ad(DEPHASING_P)
        e = matrix_units(2)
        v0 = sum(D(e[j, 0]) @ e[0, j] for j in range(2))
        assert np.allclose(v0, -2j * e[1, 1])
        assert np.allclose(extract_inner_potential(sa, D), DEPHASING_P)

    def test_round_trip(self, sa, rng):
        for _ in range(5):
            w = random_commutant_skew(sa, rng)
            assert fnorm(extract_inner_potential(sa, ad(w)) - w) <= 1e-10 * max(fnorm(w), 1)

    def test_not_derivation(self):
        with pytest.raises(NotADerivation):
            extract_inner_potential(tracial(2), laplacian(tracial(2), [DEPHASING_P]))


class TestSampler:
    def test_cyclic_shift(self):
        sa = tracial(3)
        L = sample_generator(sa, kind="nonexact_auto").L
        w = shift_unitary(3)
        x = np.arange(9.0).reshape(3, 3)
        assert np.allclose(L(x), w @ x @ w.conj().T - x)
        assert np.allclose(np.linalg.matrix_power(w, 3), np.eye(3))

    def test_commutant_too_small(self):
        sa = make_state_algebra(2, np.diag([2 / 3, 1 / 3]))
        assert commutant_skew_dim(sa) == 1
        with pytest.raises(CommutantTooSmall):
            sample_generator(sa, 2, 7)

    def test_su2(self):
        sa = tracial(2)
        s = sample_generator(sa, 3, 0)
        assert make_momentum_space(sa, list(s.ground_truth.momenta)).m == 3

    def test_nonexact_requires_tracial(self):
        with pytest.raises(DomainViolation):
            sample_generator(make_state_algebra(2, np.diag([2 / 3, 1 / 3])), kind="nonexact_auto")

    def test_deterministic(self):
        sa = tracial(3)
        a = sample_generator(sa, 2, 99, "elliptic_generic").L
        b = sample_generator(sa, 2, 99, "elliptic_generic").L
        assert np.array_equal(a.mat, b.mat)

    def test_generic_is_elliptic_in_domain(self, sa):
        for seed in range(5):
            L = sample_generator(sa, seed=seed, kind="elliptic_generic").L
            assert in_domain(sa, L).ok
            assert is_elliptic_form(sa, L)

    def test_domain_operator(self, sa, rng):
        assert in_domain(sa, sample_domain_operator(sa, rng)).ok
