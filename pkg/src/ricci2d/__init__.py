"""Numerical laboratory for conformal curvature flow on the plane.

The metric is g = e^{2u} (dx^2 + dy^2) on a finite grid; the flow is
d_t g = -R g, integrated as d_t u = e^{-2u} Lap u.  Modules:

    grid       grids, scalar fields, stencils, boundary handling, CSV I/O
    conformal  curvature and every metric-weighted diagnostic
    exact      closed-form solutions and the PDE-residual oracle
    flow       explicit steppers, stability control, the evolve driver
    analysis   diagnostic series, bound/decay/certificate checks
    geometry   geodesic distance, circle lengths, aperture estimate
    report     matplotlib figure writers
    cli        experiment runner (``ricci2d`` console script)
"""

__version__ = "0.1.0"

from .analysis import (
    COLUMNS,
    ABVerdict,
    BarrierVerdict,
    ComparisonVerdict,
    DecayReport,
    DiagnosticSeries,
    FlatnessCertificate,
    MP1Verdict,
    MPReport,
    ShiReport,
    aronson_benilan_check,
    barrier_check,
    barrier_eta,
    comparison_verify,
    decay_envelope,
    flatness_certificate,
    hsu_fit,
    lower_bound_margin,
    mp1_verify,
    record,
    shi_window_check,
    theta_bound,
)
from .conformal import (
    Christoffels,
    ConformalMetric,
    CurvatureReport,
    christoffels,
    cov_grad_R_norm_sq,
    cov_hessian_R_norm_sq,
    covariant_hessian,
    curvature_report,
    metric_grad_norm_sq,
    metric_laplacian,
    potential_f,
    quantity_F,
    quantity_G,
    quantity_H,
    quantity_J,
    scalar_curvature,
    traceless_hessian_norm_sq,
)
from .exact import (
    ExactSolution,
    HypothesesReport,
    Kind,
    bounded_hypotheses_report,
    cigar,
    eval_R,
    eval_u,
    flat,
    gaussian_bump,
    hsu_phi,
    hsu_sandwich_u,
    parse_preset,
    pde_residual,
    sample_to_grid,
)
from .flow import (
    EvolveResult,
    FlowBlowupError,
    FlowState,
    GuardExceededError,
    Scheme,
    StepperConfig,
    evolve,
    exact_ring_refresher,
    heat_companion_step,
    initial_state,
    refresh_dirichlet_ring,
    stable_dt,
    step,
)
from .geometry import (
    ApertureReport,
    DistanceField,
    aperture_estimate,
    ball_boundary_length,
    geodesic_distance,
    max_usable_radius,
)
from .grid import (
    BCKind,
    BoundaryCondition,
    GridSpec,
    ScalarField,
    SymTensorField,
    VectorField,
    gradient,
    hessian,
    inf_value,
    laplacian,
    read_field_csv,
    sup_norm,
    write_field_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
