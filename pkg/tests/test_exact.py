"""Closed-form solutions, the PDE-residual oracle, and preset parsing.

The symbolic block re-derives each closed form with sympy so every
frozen constant in this file is independently checkable: the profile
u = -ln(r^2 + e^{rate t})/2 solves d_t v = lap ln v exactly when
rate = 4, and for any other rate the residual is (4 - rate) e^{rate t}
/ (r^2 + e^{rate t})^2, bounded away from zero under refinement.
"""

import math

import numpy as np
import pytest
import sympy as sp

from ricci2d.exact import (
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
from ricci2d.grid import GridSpec


class TestSymbolicDerivations:
    def test_cigar_rate_four_solves_the_flow(self):
        x, y, t = sp.symbols("x y t", real=True)
        rate = sp.Integer(4)
        v = 1 / (x ** 2 + y ** 2 + sp.exp(rate * t))
        residual = sp.diff(v, t) - (sp.diff(sp.log(v), x, 2)
                                    + sp.diff(sp.log(v), y, 2))
        assert sp.simplify(residual) == 0

    def test_wrong_rate_residual_closed_form(self):
        x, y, t, a = sp.symbols("x y t a", real=True, positive=True)
        v = 1 / (x ** 2 + y ** 2 + sp.exp(a * t))
        residual = sp.diff(v, t) - (sp.diff(sp.log(v), x, 2)
                                    + sp.diff(sp.log(v), y, 2))
        expected = (4 - a) * sp.exp(a * t) / (x ** 2 + y ** 2
                                              + sp.exp(a * t)) ** 2
        assert sp.simplify(residual - expected) == 0

    def test_curvature_closed_forms(self):
        x, y = sp.symbols("x y", real=True)
        r2 = x ** 2 + y ** 2

        def curvature(u):
            lap = sp.diff(u, x, 2) + sp.diff(u, y, 2)
            return -2 * sp.exp(-2 * u) * lap

        a, beta, k = sp.symbols("a beta k", positive=True)
        R_cigar = curvature(-sp.log(r2 + a) / 2)
        assert sp.simplify(R_cigar - 4 * a / (r2 + a)) == 0
        R_hsu = curvature(sp.log(2 / (beta * (r2 + k))) / 2)
        assert sp.simplify(R_hsu - 2 * beta * k / (r2 + k)) == 0

    def test_bump_curvature_at_origin(self):
        x, y, A, s = sp.symbols("x y A sigma", real=True, positive=True)
        u = A * sp.exp(-(x ** 2 + y ** 2) / s ** 2)
        lap = sp.diff(u, x, 2) + sp.diff(u, y, 2)
        R = -2 * sp.exp(-2 * u) * lap
        R0 = R.subs({x: 0, y: 0})
        assert sp.simplify(R0 - 8 * A * sp.exp(-2 * A) / s ** 2) == 0


class TestEvalOracles:
    def test_cigar_u_values(self):
        assert eval_u(cigar(), 0.0, 0.0, 0.0) == 0.0
        assert eval_u(cigar(), 0.0, 0.0, 1.0) == pytest.approx(-2.0)
        assert eval_u(cigar(), 1.0, 0.0, 0.0) == pytest.approx(
            -0.5 * math.log(2.0))

    def test_cigar_R_values(self):
        assert eval_R(cigar(), 0.0, 0.0, 0.0) == pytest.approx(4.0)
        assert eval_R(cigar(), 1.0, 0.0, 0.0) == pytest.approx(2.0)
        # the origin value never decays, at any rate
        assert eval_R(cigar(), 0.0, 0.0, 1.0) == pytest.approx(4.0)
        assert eval_R(cigar(3.0), 0.0, 0.0, 0.7) == pytest.approx(4.0)
        # R = 2 exactly on |x|^2 = e^{4t}
        assert eval_R(cigar(), math.exp(1.0), 0.0, 0.5) == pytest.approx(2.0)

    def test_hsu_values(self):
        sol = hsu_phi(2.0, 1.0)
        assert eval_u(sol, 0.0, 0.0) == pytest.approx(0.0)
        assert eval_R(sol, 0.0, 0.0) == pytest.approx(4.0)
        assert eval_R(hsu_phi(2.0, 3.0), 0.0, 0.0) == pytest.approx(4.0)
        assert eval_R(hsu_phi(5.0, 3.0), 0.0, 0.0) == pytest.approx(10.0)

    def test_bump_values(self):
        sol = gaussian_bump(0.5, 1.0)
        assert eval_u(sol, 0.0, 0.0) == pytest.approx(0.5)
        assert eval_R(sol, 0.0, 0.0) == pytest.approx(4.0 / math.e)
        neg = gaussian_bump(-0.5, 1.0)
        assert eval_R(neg, 0.0, 0.0) == pytest.approx(-4.0 * math.e)

    def test_flat_values(self):
        assert eval_u(flat(0.7), 2.0, -3.0) == 0.7
        assert eval_R(flat(0.7), 2.0, -3.0) == 0.0

    def test_array_evaluation_broadcasts(self):
        xs = np.array([0.0, 1.0, 2.0])
        ys = np.zeros(3)
        u = eval_u(cigar(), xs, ys, 0.0)
        assert u.shape == (3,)
        assert u[0] == 0.0

    @pytest.mark.parametrize("sol", [hsu_phi(2.0, 1.0),
                                     gaussian_bump(0.5, 1.0)])
    def test_initial_data_kinds_reject_positive_time(self, sol):
        with pytest.raises(ValueError):
            eval_u(sol, 0.0, 0.0, 0.5)
        with pytest.raises(ValueError):
            eval_R(sol, 0.0, 0.0, 0.5)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            eval_u(cigar(), 0.0, 0.0, -0.1)


class TestConstructors:
    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            hsu_phi(0.0, 1.0)
        with pytest.raises(ValueError):
            hsu_phi(2.0, -1.0)
        with pytest.raises(ValueError):
            gaussian_bump(0.5, 0.0)
        with pytest.raises(ValueError):
            cigar(0.0)

    def test_sample_matches_pointwise_eval(self):
        spec = GridSpec.centered(32, 2.0)
        u = sample_to_grid(cigar(), spec, 0.3)
        i, j = spec.node_at(1.0, -0.5)
        assert u.data[j, i] == eval_u(cigar(), 1.0, -0.5, 0.3)

    def test_sample_rejects_underflowing_factor(self):
        spec = GridSpec.centered(32, 2.0)
        with pytest.raises(ValueError):
            sample_to_grid(flat(-400.0), spec)


class TestPdeResidual:
    def test_flat_residual_is_zero(self):
        spec = GridSpec.centered(64, 4.0)
        assert pde_residual(flat(), spec, 1.0, 1e-4) <= 1e-12
        assert pde_residual(flat(0.8), spec, 1.0, 1e-4) <= 1e-12

    def test_cigar_second_order_convergence(self):
        res = [pde_residual(cigar(), GridSpec.centered(n, 8.0), 1.0, 1e-4)
               for n in (128, 256)]
        assert 3.2 <= res[0] / res[1] <= 4.8

    def test_wrong_rate_residual_does_not_converge(self):
        # frozen from the symbolic form: sup residual at t = 1 is
        # e^{3}/e^{6} = e^{-3} at the origin, far above the oracle floor
        res = [pde_residual(cigar(3.0), GridSpec.centered(n, 8.0), 1.0, 1e-4)
               for n in (128, 256)]
        assert res[0] >= 0.01 and res[1] >= 0.01
        assert res[1] == pytest.approx(math.exp(-3.0), rel=0.05)

    def test_residual_argument_validation(self):
        spec = GridSpec.centered(64, 4.0)
        with pytest.raises(ValueError):
            pde_residual(hsu_phi(2.0, 1.0), spec, 1.0, 1e-4)
        with pytest.raises(ValueError):
            pde_residual(cigar(), spec, 1.0, 0.0)
        with pytest.raises(ValueError):
            pde_residual(cigar(), spec, 1e-5, 1e-4)
        with pytest.raises(ValueError):
            pde_residual(cigar(), spec, 1.0, 1e-4, margin=0)


class TestHypothesesAndPresets:
    def test_hypotheses_flags(self):
        rep = bounded_hypotheses_report(flat())
        assert rep.bounded_u0 and rep.bounded_R0 and rep.divergent_area
        # cigar and hsu tails have v ~ 1/r^2, so area still diverges
        # (logarithmically) even though u is unbounded below
        rep = bounded_hypotheses_report(cigar())
        assert not rep.bounded_u0
        assert rep.bounded_R0 and rep.divergent_area
        rep = bounded_hypotheses_report(hsu_phi(2.0, 1.0))
        assert not rep.bounded_u0
        assert rep.bounded_R0 and rep.divergent_area
        rep = bounded_hypotheses_report(gaussian_bump(0.5, 1.0))
        assert rep.bounded_u0 and rep.bounded_R0 and rep.divergent_area

    @pytest.mark.parametrize("text,expect", [
        ("flat", flat()),
        ("flat:0.5", flat(0.5)),
        ("cigar", cigar()),
        ("cigar:3", cigar(3.0)),
        ("hsu:2:3", hsu_phi(2.0, 3.0)),
        ("bump:0.5:1", gaussian_bump(0.5, 1.0)),
        ("bump:-0.5:1", gaussian_bump(-0.5, 1.0)),
    ])
    def test_parse_preset_round_trip(self, text, expect):
        assert parse_preset(text) == expect

    @pytest.mark.parametrize("text", ["", "nosuch", "hsu:2", "bump:1",
                                      "hsu:a:b", "cigar:0", "flat:1:2"])
    def test_parse_preset_rejects_malformed(self, text):
        with pytest.raises(ValueError):
            parse_preset(text)

    def test_sandwich_profile_sits_between_bounds(self):
        spec = GridSpec.centered(64, 4.0)
        beta, k1, k2 = 2.0, 2.0, 4.0
        u = hsu_sandwich_u(spec, beta, k1, k2)
        lo = sample_to_grid(hsu_phi(beta, k2), spec)
        hi = sample_to_grid(hsu_phi(beta, k1), spec)
        assert np.all(u.data <= hi.data + 1e-12)
        assert np.all(u.data >= lo.data - 1e-12)
        i, j = spec.node_at(0.0, 0.0)
        # k(0) = k1, so the center matches the k1 profile
        assert u.data[j, i] == pytest.approx(hi.data[j, i], abs=1e-12)
