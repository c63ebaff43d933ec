"""Exact counting, sampling and scaling limits for avoiding Bernoulli line ensembles."""

from .ensemble import (
    Barrier,
    BarrierKind,
    BernoulliLineEnsemble,
    EnsembleSpec,
    UpRightPath,
    boundary_feasible,
    check_feasibility,
    is_admissible,
    make_path,
    maximal_ensemble,
)
from .exact import (
    acceptance_probability,
    count_avoid_enum,
    count_avoid_lgv,
    count_free,
    elem_sym,
    fixed_time_pmf,
)
from .samplers import (
    GlauberMove,
    RngHandle,
    coupled_glauber_run,
    glauber_run,
    glauber_step,
    rejection_sample,
    sample_bridge,
    sequential_exact_sample,
)
from .limit import (
    LimitSpec,
    H_density,
    limit_constants,
    normalizing_constant,
    rho,
)

__version__ = "0.1.0"

__all__ = [
    "Barrier", "BarrierKind", "BernoulliLineEnsemble", "EnsembleSpec", "UpRightPath",
    "boundary_feasible", "check_feasibility", "is_admissible", "make_path", "maximal_ensemble",
    "acceptance_probability", "count_avoid_enum", "count_avoid_lgv", "count_free",
    "elem_sym", "fixed_time_pmf",
    "GlauberMove", "RngHandle", "coupled_glauber_run", "glauber_run", "glauber_step",
    "rejection_sample", "sample_bridge", "sequential_exact_sample",
    "LimitSpec", "H_density", "limit_constants", "normalizing_constant", "rho",
]
