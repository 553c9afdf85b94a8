"""Information geometry of finite-state Markov transition kernels.

Kernels are stored ``[to][from]`` (column-stochastic); see :mod:`markovgeom.pf_core`.
"""

from .divergence import DivergenceResult, divergence_properties_check, fisher_from_divergence, relative_entropy, renyi
from .errors import (
    InputError,
    MarkovGeomError,
    NumericalError,
    RangeError,
    SizeError,
    SolverError,
    StructuralError,
)
from .estimate import (
    EstimateReport,
    Trajectory,
    cramer_rao_report,
    estimate_curved,
    estimate_expectation,
    estimate_natural,
    sample_mean,
)
from .expfam import (
    ExpFamily,
    FamilyPoint,
    FisherMatrix,
    GeneratorSet,
    check_independence,
    eta,
    fisher,
    point,
    potential,
    solve_mixed_coordinates,
    theta_from_eta,
    tilt,
)
from .models import bistochastic_mixture, full_positive_family, restricted_support_family, two_state_reference
from .pf_core import (
    PFDecomposition,
    StateSpace,
    TransitionKernel,
    check_structure,
    perron_frobenius,
    stationary_distribution,
)
from .projection import (
    CurvedFamily,
    MixtureConstraints,
    curved_estimate,
    curved_fisher,
    e_project,
    m_project,
    pythagoras_point,
)
from .simulate import (
    MonteCarloReport,
    SamplerConfig,
    exhaustive_fisher,
    exhaustive_moments,
    joint_divergence_rate,
    run_monte_carlo,
    sample,
)

__version__ = "0.1.0"
