"""Calculus of conformally flat plane metrics g = e^{2u} g_E.

The log conformal factor u is the single source of truth: the conformal
factor v = e^{2u} and the potential f = -2u are always derived on the fly.
In isothermal coordinates the standard 2-D formulas reduce to

    scalar curvature   R       = -2 e^{-2u} lap(u)
    metric Laplacian   lap_g w = e^{-2u} lap(w)
    gradient norm      |grad w|_g^2 = e^{-2u} (w_x^2 + w_y^2)
    Christoffels       G^1_11 = u_x, G^1_12 = u_y, G^1_22 = -u_x,
                       G^2_11 = -u_y, G^2_12 = u_x, G^2_22 = u_y
    covariant Hessian  (D2 w)_ij = d_i d_j w - G^k_ij d_k w
    tensor norm        |T|_g^2 = e^{-4u} sum_ij T_ij^2

so lap_g f = R holds exactly at the discrete level (both sides are the
same stencil expression), which the diagnostics rely on.

The monitored scalar quantities, all evaluated pointwise at the metric's
time t with metric-weighted norms:

    F = t |grad f|_g^2 + f^2
    H = R + |grad f|_g^2
    G = t (H + |grad f|_g^2)
    J = t^4 |grad R|_g^2 + lam t^3 R^2       (lam > 0)

With a frozen-ring boundary the stencil outputs are zero on the outer
ring, so first-derivative diagnostics are valid at window margin >= 1 and
derivatives of R (itself a stencil output) at margin >= 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    BoundaryCondition,
    ScalarField,
    SymTensorField,
    gradient,
    hessian,
    laplacian,
)


@dataclass(frozen=True)
class ConformalMetric:
    """Metric g = e^{2u} g_E at time t."""

    u: ScalarField
    t: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.t) and self.t >= 0.0):
            raise ValueError(f"metric time must be finite and >= 0, got {self.t}")

    @property
    def spec(self):
        return self.u.spec

    def conformal_factor(self) -> np.ndarray:
        """v = e^{2u} as a raw array (recomputed, never cached)."""
        return np.exp(2.0 * self.u.data)

    def area(self) -> float:
        """Total metric area h^2 sum e^{2u} over all nodes."""
        return float(self.spec.cell_area * self.conformal_factor().sum())


def scalar_curvature(m: ConformalMetric, bc: BoundaryCondition) -> ScalarField:
    """R = -2 e^{-2u} lap(u)."""
    lap_u = laplacian(m.u, bc)
    return ScalarField(m.spec, -2.0 * np.exp(-2.0 * m.u.data) * lap_u.data)


def potential_f(m: ConformalMetric) -> ScalarField:
    """f = -2u, the potential whose metric Laplacian is R."""
    return ScalarField(m.spec, -2.0 * m.u.data)


def metric_laplacian(w: ScalarField, m: ConformalMetric,
                     bc: BoundaryCondition) -> ScalarField:
    """lap_g w = e^{-2u} lap(w)."""
    if w.spec != m.spec:
        raise ValueError("field and metric live on different grids")
    lap_w = laplacian(w, bc)
    return ScalarField(m.spec, np.exp(-2.0 * m.u.data) * lap_w.data)


def metric_grad_norm_sq(w: ScalarField, m: ConformalMetric,
                        bc: BoundaryCondition) -> ScalarField:
    """|grad w|_g^2 = e^{-2u} (w_x^2 + w_y^2)."""
    if w.spec != m.spec:
        raise ValueError("field and metric live on different grids")
    g = gradient(w, bc)
    norm2 = np.exp(-2.0 * m.u.data) * (g.x.data ** 2 + g.y.data ** 2)
    return ScalarField(m.spec, norm2)


@dataclass(frozen=True)
class Christoffels:
    """The six symbols of g = e^{2u} g_E; component a_bc means G^a_bc."""

    g1_11: ScalarField
    g1_12: ScalarField
    g1_22: ScalarField
    g2_11: ScalarField
    g2_12: ScalarField
    g2_22: ScalarField


def christoffels(m: ConformalMetric, bc: BoundaryCondition) -> Christoffels:
    g = gradient(m.u, bc)
    ux, uy = g.x, g.y
    return Christoffels(g1_11=ux, g1_12=uy, g1_22=-ux,
                        g2_11=-uy, g2_12=ux, g2_22=uy)


def covariant_hessian(w: ScalarField, m: ConformalMetric,
                      bc: BoundaryCondition) -> SymTensorField:
    """(D2 w)_ij = d_i d_j w - G^k_ij d_k w for the conformal symbols."""
    if w.spec != m.spec:
        raise ValueError("field and metric live on different grids")
    gu = gradient(m.u, bc)
    gw = gradient(w, bc)
    hw = hessian(w, bc)
    ux, uy = gu.x.data, gu.y.data
    wx, wy = gw.x.data, gw.y.data
    dxx = hw.xx.data - ux * wx + uy * wy
    dxy = hw.xy.data - uy * wx - ux * wy
    dyy = hw.yy.data + ux * wx - uy * wy
    return SymTensorField(ScalarField(m.spec, dxx), ScalarField(m.spec, dxy),
                          ScalarField(m.spec, dyy))


def traceless_hessian_norm_sq(w: ScalarField, m: ConformalMetric,
                              bc: BoundaryCondition) -> ScalarField:
    """|D2 w - (1/2)(lap_g w) g|_g^2, nonnegative everywhere.

    In coordinates the traceless part has T_xx = -T_yy =
    (D2w_xx - D2w_yy)/2 and T_xy = D2w_xy, so the squared metric norm is
    e^{-4u} (2 T_xx^2 + 2 T_xy^2).
    """
    d2 = covariant_hessian(w, m, bc)
    t_xx = 0.5 * (d2.xx.data - d2.yy.data)
    t_xy = d2.xy.data
    norm2 = np.exp(-4.0 * m.u.data) * (2.0 * t_xx ** 2 + 2.0 * t_xy ** 2)
    return ScalarField(m.spec, norm2)


def quantity_F(m: ConformalMetric, bc: BoundaryCondition) -> ScalarField:
    """F = t |grad f|_g^2 + f^2."""
    f = potential_f(m)
    gradf2 = metric_grad_norm_sq(f, m, bc)
    return ScalarField(m.spec, m.t * gradf2.data + f.data ** 2)


def quantity_H(m: ConformalMetric, bc: BoundaryCondition) -> ScalarField:
    """H = R + |grad f|_g^2."""
    r = scalar_curvature(m, bc)
    gradf2 = metric_grad_norm_sq(potential_f(m), m, bc)
    return ScalarField(m.spec, r.data + gradf2.data)


def quantity_G(m: ConformalMetric, bc: BoundaryCondition) -> ScalarField:
    """G = t (H + |grad f|_g^2) = t (R + 2 |grad f|_g^2)."""
    r = scalar_curvature(m, bc)
    gradf2 = metric_grad_norm_sq(potential_f(m), m, bc)
    return ScalarField(m.spec, m.t * (r.data + 2.0 * gradf2.data))


def quantity_J(m: ConformalMetric, bc: BoundaryCondition,
               lam: float = 4.0) -> ScalarField:
    """J = t^4 |grad R|_g^2 + lam t^3 R^2 with lam > 0."""
    if not lam > 0.0:
        raise ValueError(f"J needs lam > 0, got {lam}")
    r = scalar_curvature(m, bc)
    gradr2 = metric_grad_norm_sq(r, m, bc)
    data = m.t ** 4 * gradr2.data + lam * m.t ** 3 * r.data ** 2
    return ScalarField(m.spec, data)


def cov_grad_R_norm_sq(m: ConformalMetric, bc: BoundaryCondition) -> ScalarField:
    """|grad R|_g^2; valid at margin >= 2 for frozen-ring boundaries."""
    r = scalar_curvature(m, bc)
    return metric_grad_norm_sq(r, m, bc)


def cov_hessian_R_norm_sq(m: ConformalMetric,
                          bc: BoundaryCondition) -> ScalarField:
    """|D2 R|_g^2 = e^{-4u} (D2R_xx^2 + 2 D2R_xy^2 + D2R_yy^2)."""
    r = scalar_curvature(m, bc)
    d2 = covariant_hessian(r, m, bc)
    norm2 = np.exp(-4.0 * m.u.data) * (
        d2.xx.data ** 2 + 2.0 * d2.xy.data ** 2 + d2.yy.data ** 2)
    return ScalarField(m.spec, norm2)


@dataclass(frozen=True)
class CurvatureReport:
    """Pointwise diagnostic fields of one metric snapshot.

    H = R + gradf2 holds exactly by construction.  traceless_hess2 is the
    squared norm of the traceless covariant Hessian of f.
    """

    R: ScalarField
    gradf2: ScalarField
    H: ScalarField
    gradR2: ScalarField
    hess2R: ScalarField
    traceless_hess2: ScalarField


def curvature_report(m: ConformalMetric, bc: BoundaryCondition) -> CurvatureReport:
    r = scalar_curvature(m, bc)
    f = potential_f(m)
    gradf2 = metric_grad_norm_sq(f, m, bc)
    h = ScalarField(m.spec, r.data + gradf2.data)
    gradr2 = metric_grad_norm_sq(r, m, bc)
    hess2r = cov_hessian_R_norm_sq(m, bc)
    tl2 = traceless_hessian_norm_sq(f, m, bc)
    return CurvatureReport(R=r, gradf2=gradf2, H=h, gradR2=gradr2,
                           hess2R=hess2r, traceless_hess2=tl2)
