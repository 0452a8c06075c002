"""Explicit decay-of-correlations certificates for expanding maps and Young towers.

The toolkit computes closed-form mixing-rate constants for full-branch
uniformly expanding interval maps, simulates the coupling argument behind
them, builds Young towers with polynomial or stretched-exponential
return-time tails, and emits verified analytic bounds next to numerically
measured operator decay.
"""

from .certificates import (
    DecayCertificate,
    NUHConstants,
    PolynomialTail,
    ReturnTimeDistribution,
    StretchedTail,
    TowerConstants,
    k_mu_constant,
    nuh_constants,
    override_certificate,
    select_returns,
    tower_constants,
    ue_certificate,
    validate_constants,
)
from .coupling import CouplingTrace, coupling_step, run_coupling, split_observable
from .grid import (
    GridObservable,
    grid_nodes,
    holder_seminorm,
    integrate,
    integrate_product,
    log_holder_seminorm,
    midpoint_quadrature,
)
from .hyperbolic import NUHInput, QuotientDecay, kappa_tail_bound, nuh_correlation_bound
from .maps import (
    Branch,
    UEMapSpec,
    branch_preimages,
    doubling_spec,
    lsv_induced_spec,
    moebius_test_spec,
    spec_from_document,
    spec_to_document,
    truncation_error_bound,
    validate_spec,
)
from .stochastic import (
    CouplingMatrix,
    EmpiricalTail,
    PSequence,
    TailBound,
    coupling_matrix,
    poly_tail_bound,
    sample_h,
    stretched_tail_bound,
    word_h,
)
from .tower import (
    TowerObservable,
    TowerSpec,
    build_tower,
    centered_indicator_level0,
    decompose_once,
    indicator_level0,
    integrate_tower,
    integrate_tower_abs,
    measure_decay,
    nonmixing_bound,
    representable,
    tower_apply,
    tower_apply_n,
    tower_decay_bound,
)
from .transfer import apply_n, apply_once, correlation_ue, decay_trace, invariant_density

__version__ = "0.1.0"
