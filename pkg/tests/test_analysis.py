"""Diagnostic series, bound checks, envelopes, fits, and certificates.

Most checks run on synthetic series where the right answer is chosen in
advance (Q = 1/(1+t) has envelope constant 1 and slope -1; a constant Q
must fail tail monotonicity by a factor ~2), plus exact-solution states
where the analytic value is known.
"""

import math

import numpy as np
import pytest

from ricci2d.analysis import (
    COLUMNS,
    DiagnosticSeries,
    MPReport,
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
from ricci2d.conformal import ConformalMetric, scalar_curvature
from ricci2d.exact import cigar, hsu_phi, sample_to_grid
from ricci2d.flow import initial_state
from ricci2d.grid import BoundaryCondition, GridSpec, ScalarField, sup_norm

BC = BoundaryCondition.linear_extrapolate()


def make_series(t, **cols):
    t = np.asarray(t, dtype=float)
    data = np.zeros((t.size, len(COLUMNS)))
    data[:, 0] = t
    data[:, COLUMNS.index("area")] = 1.0
    for name, vals in cols.items():
        data[:, COLUMNS.index(name)] = vals
    return DiagnosticSeries(data)


class TestDiagnosticSeries:
    def test_column_order_is_frozen(self):
        assert COLUMNS == ("t", "sup_R", "inf_R", "sup_gradf2", "sup_H",
                           "sup_gradR2", "sup_hess2R", "sup_F", "sup_G",
                           "sup_J", "area", "sup_w")

    def test_column_lookup(self):
        s = make_series([0.0, 1.0], sup_R=[2.0, 1.0])
        assert list(s.column("sup_R")) == [2.0, 1.0]
        with pytest.raises(KeyError):
            s.column("nope")

    def test_time_must_increase(self):
        with pytest.raises(ValueError):
            make_series([0.0, 1.0, 1.0])

    def test_values_must_be_finite(self):
        with pytest.raises(ValueError):
            make_series([0.0, 1.0], sup_R=[0.0, np.inf])

    def test_csv_round_trip_is_byte_stable(self, tmp_path):
        rng = np.random.default_rng(4)
        data = rng.normal(size=(7, len(COLUMNS)))
        data[:, 0] = np.arange(7.0)
        s = DiagnosticSeries(data)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        s.write_csv(p1)
        DiagnosticSeries.read_csv(p1).write_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_read_rejects_foreign_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("t,sup_R\n0,1\n")
        with pytest.raises(ValueError):
            DiagnosticSeries.read_csv(p)


class TestRecord:
    def test_flat_state_row(self):
        spec = GridSpec.centered(64, 4.0)
        state = initial_state(ScalarField.constant(spec, 0.0),
                              BoundaryCondition.periodic())
        row = record(state, margin=4)
        s = dict(zip(COLUMNS, row))
        assert s["t"] == 0.0
        assert s["sup_R"] == 0.0 and s["inf_R"] == 0.0
        assert s["sup_gradf2"] == 0.0 and s["sup_J"] == 0.0
        assert s["area"] == pytest.approx(64.0)
        assert s["sup_w"] == 0.0

    def test_sup_w_covers_the_full_grid(self):
        # the heat bound applies on the ring too; a windowed sup would
        # miss mass parked there
        spec = GridSpec.centered(32, 2.0)
        state = initial_state(ScalarField.constant(spec, 0.0),
                              BoundaryCondition.periodic())
        w_data = np.zeros((32, 32))
        w_data[0, 0] = -5.0
        row = record(state, margin=4, companion=ScalarField(spec, w_data))
        assert dict(zip(COLUMNS, row))["sup_w"] == 5.0

    def test_matches_direct_windowed_sups(self):
        spec = GridSpec.centered(128, 8.0)
        u = sample_to_grid(cigar(), spec, 0.2)
        state = initial_state(u, BC, t=0.2)
        row = dict(zip(COLUMNS, record(state, margin=4)))
        R = scalar_curvature(ConformalMetric(u, 0.2), BC)
        assert row["sup_R"] == sup_norm(R, 4)
        assert row["t"] == 0.2
        assert row["sup_H"] == pytest.approx(4.0, abs=0.05)


class TestLowerBound:
    def test_theta_values(self):
        assert theta_bound(2.0, 0.0) == pytest.approx(-2.0)
        assert theta_bound(2.0, 1.0) == pytest.approx(-2.0 / 3.0)
        assert theta_bound(0.5, np.array([0.0, 2.0]))[1] == pytest.approx(
            -0.25)

    def test_margin_on_synthetic_series(self):
        t = np.linspace(0.0, 4.0, 17)
        k0 = 2.0
        inf_r = theta_bound(k0, t) + 0.1
        s = make_series(t, inf_R=inf_r)
        assert lower_bound_margin(s, k0) == pytest.approx(0.1)

    def test_equality_case_has_zero_margin(self):
        t = np.linspace(0.0, 4.0, 17)
        k0 = 1.5
        s = make_series(t, inf_R=theta_bound(k0, t))
        assert lower_bound_margin(s, k0) == pytest.approx(0.0, abs=1e-15)
        assert comparison_verify(s, k0, 1e-3).passed

    def test_k0_below_initial_curvature_rejected(self):
        s = make_series([0.0, 1.0], sup_R=[3.0, 1.0], inf_R=[-1.0, -0.5])
        with pytest.raises(ValueError):
            lower_bound_margin(s, 2.0)

    def test_comparison_verdict_failure(self):
        t = np.linspace(0.0, 4.0, 17)
        k0 = 2.0
        inf_r = theta_bound(k0, t) - 0.05 * (t >= 1.0)
        v = comparison_verify(make_series(t, inf_R=inf_r), k0, 1e-3)
        assert not v.passed
        assert v.min_S == pytest.approx(-0.05)
        assert v.k0 == k0


class TestDecayEnvelope:
    def test_exact_power_law(self):
        t = np.linspace(0.0, 20.0, 81)
        s = make_series(t, sup_H=1.0 / (1.0 + t))
        rep = decay_envelope(s, "sup_H", 1.0)
        assert rep.envelope_C == pytest.approx(1.0)
        assert rep.tail_monotone
        assert rep.fitted_slope == pytest.approx(-1.0, abs=1e-9)

    def test_constant_quantity_fails_monotonicity(self):
        # envelope 0.5 (1+t) grows ~2x over the tail: far beyond slack
        t = np.linspace(0.0, 20.0, 81)
        s = make_series(t, sup_H=np.full_like(t, 0.5))
        rep = decay_envelope(s, "sup_H", 1.0)
        assert not rep.tail_monotone
        assert rep.fitted_slope == pytest.approx(0.0, abs=1e-12)

    def test_transient_sets_the_envelope(self):
        t = np.linspace(0.0, 20.0, 81)
        q = (1.0 + 5.0 * np.exp(-t)) / (1.0 + t)
        s = make_series(t, sup_gradf2=q)
        rep = decay_envelope(s, "sup_gradf2", 1.0)
        assert rep.envelope_C == pytest.approx(6.0)
        assert rep.tail_monotone

    def test_small_ripples_pass_within_slack(self):
        t = np.linspace(0.0, 20.0, 201)
        q = (1.0 + 0.003 * np.sin(7.0 * t)) / (1.0 + t)
        s = make_series(t, sup_H=q)
        assert decay_envelope(s, "sup_H", 1.0).tail_monotone

    def test_zero_tail_gives_nan_slope(self):
        t = np.linspace(0.0, 10.0, 41)
        s = make_series(t)   # all quantities identically zero
        rep = decay_envelope(s, "sup_H", 1.0)
        assert math.isnan(rep.fitted_slope)
        assert rep.envelope_C == 0.0
        assert rep.tail_monotone

    def test_short_tail_rejected(self):
        s = make_series([0.0, 1.0, 2.0], sup_H=[1.0, 0.5, 0.3])
        with pytest.raises(ValueError):
            decay_envelope(s, "sup_H", 1.0, tail_frac=0.2)


class TestMP1:
    def test_pass_and_fail_around_tolerance(self):
        t = [0.0, 1.0]
        ok = mp1_verify(make_series(t, sup_w=[1.0, 1.0 + 5e-7]), 1e-6)
        assert ok.passed
        bad = mp1_verify(make_series(t, sup_w=[1.0, 1.0 + 2e-6]), 1e-6)
        assert not bad.passed
        assert bad.sup_w0 == 1.0
        assert bad.worst_sup_w == pytest.approx(1.0 + 2e-6)

    def test_zero_companion_passes(self):
        assert mp1_verify(make_series([0.0, 1.0]), 1e-6).passed


class TestBarrier:
    def test_eta_shape_and_origin(self):
        spec = GridSpec.centered(64, 4.0)
        eta = barrier_eta(0.25, spec)
        i, j = spec.node_at(0.0, 0.0)
        assert eta.data[j, i] == 0.0
        assert np.all(eta.data >= 0.0)
        assert eta.data.max() == pytest.approx(0.25 * math.log(1.0 + 32.0),
                                               rel=1e-12)

    def test_eta_validation(self):
        spec = GridSpec.centered(64, 4.0)
        with pytest.raises(ValueError):
            barrier_eta(0.0, spec)
        off = GridSpec(nx=16, ny=16, h=0.1, x0=0.05, y0=0.0)
        with pytest.raises(ValueError):
            barrier_eta(0.1, off)

    def test_flat_background_threshold(self):
        # max lap eta = 4 eps (1 + O(h^2)), so eps = 0.2499 certifies
        # and eps = 1 is four times too big
        m = ConformalMetric(ScalarField.constant(
            GridSpec.centered(128, 4.0), 0.0), 0.0)
        good = barrier_check(barrier_eta(0.2499, m.spec), m, 1e-2)
        assert good.passed
        assert good.uniform_bound == pytest.approx(1.0, abs=0.01)
        bad = barrier_check(barrier_eta(1.0, m.spec), m, 1e-2)
        assert not bad.passed
        assert bad.uniform_bound == pytest.approx(4.0, abs=0.05)

    def test_bound_scales_with_sup_u(self):
        spec = GridSpec.centered(64, 4.0)
        eta = barrier_eta(0.1, spec)
        b0 = barrier_check(eta, ConformalMetric(
            ScalarField.constant(spec, 0.0), 0.0), 1e-2)
        b3 = barrier_check(eta, ConformalMetric(
            ScalarField.constant(spec, 0.3), 0.0), 1e-2)
        assert b3.uniform_bound == pytest.approx(
            math.exp(0.6) * b0.uniform_bound, rel=1e-12)
        assert b3.sup_abs_u == 0.3

    def test_run_wide_M_override(self):
        spec = GridSpec.centered(64, 4.0)
        m = ConformalMetric(ScalarField.constant(spec, 0.0), 0.0)
        v = barrier_check(barrier_eta(0.1, spec), m, 1e-2, sup_abs_u=1.0)
        assert v.sup_abs_u == 1.0
        # discrete lap eta tops out slightly below 4 eps
        assert v.uniform_bound == pytest.approx(math.exp(2.0) * 0.4,
                                                rel=0.02)

    def test_cigar_epsilon_dichotomy(self):
        # the deep well of the cigar forces a tiny eps: e^{-2M}/4 works,
        # 2 e^{-2M} cannot
        spec = GridSpec.centered(128, 8.0)
        m = ConformalMetric(sample_to_grid(cigar(), spec, 0.0), 0.0)
        M = float(np.abs(m.u.data).max())
        good = barrier_check(barrier_eta(math.exp(-2 * M) / 4 * 0.999,
                                         spec), m, 1e-2)
        bad = barrier_check(barrier_eta(2.0 * math.exp(-2 * M), spec),
                            m, 1e-2)
        assert good.passed and not bad.passed


class TestAronsonBenilan:
    def test_contracting_exact_solution_passes(self):
        spec = GridSpec.centered(64, 4.0)
        snaps = [(t, sample_to_grid(cigar(), spec, t))
                 for t in (0.5, 1.0, 1.5)]
        v = aronson_benilan_check(snaps, 1e-6)
        assert v.passed
        assert v.n_times == 1
        assert v.max_excess < 0.0

    def test_quadratic_growth_fails(self):
        # v = t^2 + 0.01 has d_t v = 2t > v/t + 1 near t = 1
        spec = GridSpec.centered(16, 1.0)

        def u_at(t):
            return ScalarField.constant(spec, 0.5 * math.log(t * t + 0.01))

        snaps = [(t, u_at(t)) for t in (0.9, 1.0, 1.1)]
        v = aronson_benilan_check(snaps, 1e-6)
        assert not v.passed
        assert v.max_excess == pytest.approx(2.0 - 1.01, abs=0.02)

    def test_snapshot_validation(self):
        spec = GridSpec.centered(16, 1.0)
        f = ScalarField.constant(spec, 0.0)
        with pytest.raises(ValueError):
            aronson_benilan_check([(0.0, f), (1.0, f)], 1e-6)
        with pytest.raises(ValueError):
            aronson_benilan_check([(0.0, f), (1.0, f), (0.5, f)], 1e-6)
        with pytest.raises(ValueError):
            # the only interior time is t = 0, which cannot be checked
            aronson_benilan_check([(-1.0, f), (0.0, f), (1.0, f)], 1e-6)


class TestShiWindow:
    def test_flat_series_has_zero_constant(self):
        t = np.linspace(0.0, 2.0, 21)
        s = make_series(t)
        rep = shi_window_check(s, 1, 0.0)
        assert rep.K == 0.0
        assert rep.window_t_max == pytest.approx(2.0)

    def test_exact_inverse_time_scaling(self):
        t = np.linspace(0.0, 1.0, 11)[1:]   # avoid the t = 0 row
        s = make_series(t, sup_gradR2=1.0 / t)
        rep = shi_window_check(s, 1, 1.0)
        assert rep.K == pytest.approx(1.0)
        assert rep.m == 1

    def test_window_excludes_late_rows(self):
        t = np.array([0.1, 0.2, 0.3, 2.0])
        q = np.array([1.0, 1.0, 1.0, 1e6])
        s = make_series(t, sup_hess2R=q)
        rep = shi_window_check(s, 2, 2.0)   # window t <= 0.5
        assert rep.n_rows == 3
        assert rep.K == pytest.approx(math.sqrt(1.0) * 0.3)

    def test_order_validation(self):
        s = make_series([0.1, 0.2, 0.3])
        with pytest.raises(ValueError):
            shi_window_check(s, 3, 1.0)


class TestHsuFit:
    def test_noiseless_recovery(self):
        spec = GridSpec.centered(128, 8.0)
        m = ConformalMetric(sample_to_grid(hsu_phi(2.0, 3.0), spec), 0.0)
        k_fit, residual = hsu_fit(m, 2.0, 4)
        assert abs(k_fit - 3.0) <= 1e-6
        assert residual <= 1e-12

    def test_one_percent_noise_stays_within_five(self):
        spec = GridSpec.centered(128, 8.0)
        u = sample_to_grid(hsu_phi(2.0, 3.0), spec)
        rng = np.random.default_rng(8)
        noise = rng.uniform(-0.01, 0.01, u.data.shape)
        noisy = ScalarField(spec, u.data + 0.5 * np.log1p(noise))
        k_fit, _ = hsu_fit(ConformalMetric(noisy, 0.0), 2.0, 4)
        assert abs(k_fit - 3.0) <= 0.15

    def test_accepts_flow_state(self):
        spec = GridSpec.centered(64, 4.0)
        state = initial_state(sample_to_grid(hsu_phi(2.0, 1.0), spec), BC)
        k_fit, residual = hsu_fit(state, 2.0, 2)
        assert k_fit == pytest.approx(1.0, abs=1e-9)

    def test_mismatched_profile_reports_large_residual(self):
        spec = GridSpec.centered(64, 4.0)
        m = ConformalMetric(ScalarField.constant(spec, 0.0), 0.0)
        _, residual = hsu_fit(m, 2.0, 2)
        assert residual > 0.05   # v = 1 everywhere vs a decaying model

    def test_argument_validation(self):
        spec = GridSpec.centered(64, 4.0)
        m = ConformalMetric(ScalarField.constant(spec, 0.0), 0.0)
        with pytest.raises(ValueError):
            hsu_fit(m, 0.0, 2)
        with pytest.raises(ValueError):
            hsu_fit(m, 2.0, -1)


class TestFlatnessCertificate:
    def test_flat_metric_certifies_exactly(self):
        spec = GridSpec.centered(64, 4.0)
        m = ConformalMetric(ScalarField.constant(spec, 0.35), 0.0)
        cert = flatness_certificate(m, (0.0, 0.0), 4, bc=BC)
        assert cert.max_violation == pytest.approx(0.0, abs=1e-12)
        assert cert.sup_abs_R == 0.0
        assert cert.osc_f == pytest.approx(0.0, abs=1e-12)
        assert cert.f_center == pytest.approx(-0.7)
        assert cert.sup_grad_f == 0.0

    def test_missing_bc_rejected(self):
        spec = GridSpec.centered(64, 4.0)
        m = ConformalMetric(ScalarField.constant(spec, 0.0), 0.0)
        with pytest.raises(ValueError):
            flatness_certificate(m, (0.0, 0.0), 4)

    def test_violation_is_scale_aware(self):
        # u = 0.01 x stays within the distance-gradient budget because
        # sup |grad f|_g is measured from the same field
        spec = GridSpec.centered(64, 4.0)
        m = ConformalMetric(ScalarField.from_function(
            spec, lambda x, y: 0.01 * x), 0.0)
        cert = flatness_certificate(m, (0.0, 0.0), 4, bc=BC)
        assert cert.max_violation <= 1e-6
        # window x spans [-3.5, 3.375] on this grid, so osc f covers it
        assert cert.osc_f == pytest.approx(0.02 * (3.5 + 3.375), rel=1e-6)


class TestMPReport:
    def _verdicts(self, barrier_fail_passes):
        t = [0.0, 1.0]
        s = make_series(t, sup_w=[1.0, 0.9])
        comparison = comparison_verify(
            make_series(t, inf_R=[-1.0, -0.4]), 1.0, 1e-3)
        spec = GridSpec.centered(32, 2.0)
        m = ConformalMetric(ScalarField.constant(spec, 0.0), 0.0)
        b_ok = barrier_check(barrier_eta(0.24, spec), m, 1e-2)
        eps_fail = 0.24 if barrier_fail_passes else 1.0
        b_bad = barrier_check(barrier_eta(eps_fail, spec), m, 1e-2)
        return MPReport(comparison=comparison, barrier_pass=b_ok,
                        barrier_fail=b_bad, mp1=mp1_verify(s, 1e-6),
                        sup_w_trajectory=(1.0, 0.9))

    def test_all_passed_requires_negative_control_to_fail(self):
        assert self._verdicts(barrier_fail_passes=False).all_passed
        assert not self._verdicts(barrier_fail_passes=True).all_passed

    def test_format_text_mentions_every_check(self):
        text = self._verdicts(False).format_text()
        assert "comparison" in text
        assert "barrier eps_ok" in text
        assert "barrier eps_big" in text
        assert "heat sup bound" in text
        assert text.splitlines()[-1].endswith("pass")
