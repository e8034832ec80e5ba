"""Exact elliptic generators of quantum Markov semigroups on M_n(C):
validation, ellipticity and exactness tests, dynamical-invariant extraction,
and conjugacy checks."""
from .core import (
    StateAlgebra,
    Superoperator,
    ad,
    adjoint_gns,
    delta,
    delta_inv,
    make_state_algebra,
    modular,
    rho,
    tracial,
)
from .errors import DynvarError
from .forms import OneForm, TwoForm, d, star1, star2, symbol, wedge
from .generators import (
    MomentumSpace,
    in_domain,
    is_elliptic_ccp,
    is_elliptic_form,
    laplacian,
    make_generator,
    make_momentum_space,
    sample_generator,
)
from .cohomology import ModularCochain, coboundary, exactness_report
from .invariants import (
    DynamicalInvariant,
    Fingerprint,
    KmsMetric,
    check_conjugacy,
    decompose_metric,
    extract_invariant,
    fingerprint,
    metric_from_generator,
    reconstruct_laplacian,
    search_conjugacy,
)
from .semigroup import compress, evolve, markov_checks, mixing_analysis, support_projection

__version__ = "0.1.0"
