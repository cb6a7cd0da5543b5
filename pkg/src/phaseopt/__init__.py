"""Positive phase-space probability densities closest to a Wigner function."""

from .errors import (
    BracketError,
    ConvergenceError,
    DegenerateDensityError,
    DomainMismatchError,
    GridFormatError,
    NotNormalizedError,
    PhaseOptError,
    QuadratureError,
)
from .marginal_matcher import MatchConfig, MultiplierPair, marginal_residuals, solve_multipliers
from .optimizer import (
    OptimResult,
    constraint_integral,
    quantumness,
    sigma2,
    solve_c,
    solve_cd,
    threshold_density,
)
from .phasespace import (
    Moments,
    PhaseSpaceGrid,
    integrate,
    marginal_p,
    marginal_q,
    moments,
    radial_integral,
    rasterize,
    read_grid,
    rotate,
    write_grid,
)
from .states import (
    HUSIMI_Q,
    HusimiParams,
    RadialProfile,
    StateSpec,
    husimi_radial,
    position_density,
    smeared_variances,
    wigner_radial,
)
from .timefreq import (
    SignalRecord,
    bandwidth_from_amplitude,
    positive_bandwidth,
    spectrogram,
    wigner_ville,
)

__version__ = "0.1.0"
