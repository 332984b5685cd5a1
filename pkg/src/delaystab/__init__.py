"""Exponential stability of linear delay equations with pointwise and distributed delays.

Two equation families are supported on ``[-tau*, inf)``::

    IDE:  X(t)  + sum_k A_k X(t - tau_k) + int_0^tau* N(s) X(t - s) ds = 0
    DDE:  X'(t) + sum_k A_k X(t - tau_k) + int_0^tau* N(s) X(t - s) ds = 0

``spectrum`` locates zeros of the characteristic determinant, ``timedomain``
simulates trajectories and resolvents on a uniform grid, and ``stability``
confronts the two.
"""

from .model import (
    CommensurabilityError,
    GridMeasure,
    HistoryFunction,
    KernelPiece,
    Kind,
    NumericalError,
    PiecewiseKernel,
    SpecValidationError,
    SystemSpec,
    Trajectory,
    check_commensurate,
    discretize_measure,
    dumps,
    load,
    loads,
    validate,
)
from .charmat import char_det, eval_char, eval_delta0, eval_R
from .spectrum import (
    Box,
    Root,
    SpectrumReport,
    default_window,
    find_roots,
    levin_lower_bound_probe,
    riemann_lebesgue_probe,
    spectral_abscissa,
    winding_number,
)
from .timedomain import (
    build_forcing,
    build_modal_history,
    compute_resolvent,
    differential_resolvent,
    modal_trajectory,
    simulate,
    simulate_dde,
    simulate_ide,
    solve_via_resolvent,
)
from .stability import (
    CriterionVerdict,
    NormKind,
    NormSeries,
    check_criterion,
    fit_decay,
    norm_series,
    partial_trajectory,
    window_norm,
)

__version__ = "0.1.0"
