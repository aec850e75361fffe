"""Empirical verification of the flow's estimates over recorded runs.

A run produces a DiagnosticSeries: one row per recorded time holding the
windowed sup/inf norms of the curvature quantities, the total area, and
the sup of the heat companion.  Every check here is pure post-processing
of such a series (or of field snapshots), with explicit tolerances in
every verdict:

    lower_bound_margin / comparison_verify
        R(x,t) >= theta(t) = -k0/(1 + k0 t) with k0 at least sup |R(.,0)|;
        the margin is min over rows of inf_R + k0/(1 + k0 t), and
        S = R - theta >= 0 is the same statement.
    decay_envelope
        for Q(t) among the sup-columns and a target exponent p, the
        envelope C = max Q(t)(1+t)^p, tail monotonicity of Q(t)(1+t)^p
        over the final half of the run, and the log Q vs log(1+t) slope.
    mp1_verify
        sup |w(t)| <= sup |w(0)| (1 + tol) for the heat companion.
    barrier_check
        eta = eps ln(1 + |x|^2) satisfies eta >= 0, eta(0) = 0, and the
        uniform bound e^{2M} max lap(eta) <= 1 + tol certifying
        lap_g eta <= 1 for EVERY metric of the run with sup |u| <= M
        (eta -> infinity at infinity holds analytically, not checkable on
        a window).
    aronson_benilan_check
        d_t v <= v/t via centered differences of v snapshots.
    shi_window_check
        report-only empirical K with |grad^m R| <= K / sqrt(t^m) on an
        early window.
    hsu_fit
        least-squares k in the model v = 2/(beta (|x|^2 + k)), plus the
        sup-norm model residual.
    flatness_certificate
        |f(x,t) - f(x0,t)| <= d_t(x, x0) sup |grad f|_g on the window,
        plus the flatness summary (sup |R|, oscillation of f, the
        would-be limiting constant f(x0,t)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conformal import (
    ConformalMetric,
    cov_hessian_R_norm_sq,
    metric_grad_norm_sq,
    potential_f,
    scalar_curvature,
)
from .geometry import DistanceField, geodesic_distance
from .grid import BoundaryCondition, GridSpec, ScalarField, laplacian

COLUMNS = ("t", "sup_R", "inf_R", "sup_gradf2", "sup_H", "sup_gradR2",
           "sup_hess2R", "sup_F", "sup_G", "sup_J", "area", "sup_w")


@dataclass(frozen=True)
class DiagnosticSeries:
    """Rows of windowed sup/inf diagnostics, one per recorded time."""

    data: np.ndarray  # shape (n_rows, len(COLUMNS))

    def __post_init__(self):
        arr = np.array(self.data, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != len(COLUMNS):
            raise ValueError(f"series needs shape (n, {len(COLUMNS)}), "
                             f"got {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("series is empty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("series contains non-finite entries")
        t = arr[:, 0]
        if arr.shape[0] > 1 and not np.all(np.diff(t) > 0.0):
            raise ValueError("series times must be strictly increasing")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def t(self) -> np.ndarray:
        return self.data[:, 0]

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, COLUMNS.index(name)]
        except ValueError:
            raise KeyError(f"unknown series column {name!r}; "
                           f"columns are {', '.join(COLUMNS)}") from None

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(COLUMNS) + "\n")
            for row in self.data:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def read_csv(cls, path) -> "DiagnosticSeries":
        with open(path) as fh:
            header = fh.readline().strip()
            if header.split(",") != list(COLUMNS):
                raise ValueError(f"{path}: unexpected series header {header!r}")
            rows = [np.array(line.split(","), dtype=float)
                    for line in fh if line.strip()]
        if not rows:
            raise ValueError(f"{path}: series has no rows")
        return cls(np.vstack(rows))


def _window_max(arr: np.ndarray, margin: int) -> float:
    ny, nx = arr.shape
    if margin < 0 or 2 * margin >= min(nx, ny):
        raise ValueError(f"margin {margin} leaves an empty window")
    w = arr[margin:-margin, margin:-margin] if margin else arr
    return float(w.max())


def _window_min(arr: np.ndarray, margin: int) -> float:
    return -_window_max(-arr, margin)


def record(state, margin: int, lam: float = 4.0,
           companion: ScalarField | None = None) -> np.ndarray:
    """One series row: windowed sups of the tracked quantities.

    `state` needs attributes `metric` and `bc` (duck-typed so recording
    does not depend on the stepper).  sup_w is the full-grid sup |w| of
    the companion (0 when absent): the heat bound covers the frozen ring
    too, and windowing it would compare different node sets over time.
    """
    m, bc = state.metric, state.bc
    t = m.t
    # overflow here means the state left the representable range; the
    # non-finite values trip field validation, which callers map to abort
    with np.errstate(over="ignore", invalid="ignore"):
        r = scalar_curvature(m, bc)
        f = potential_f(m)
        gradf2 = metric_grad_norm_sq(f, m, bc)
        h_arr = r.data + gradf2.data
        gradr2 = metric_grad_norm_sq(r, m, bc)
        hess2r = cov_hessian_R_norm_sq(m, bc)
        f_arr = t * gradf2.data + f.data ** 2
        g_arr = t * (h_arr + gradf2.data)
        j_arr = t ** 4 * gradr2.data + lam * t ** 3 * r.data ** 2
        area = m.area()
    sup_w = 0.0 if companion is None else float(np.abs(companion.data).max())
    row = np.array([
        t,
        _window_max(r.data, margin),
        _window_min(r.data, margin),
        _window_max(gradf2.data, margin),
        _window_max(h_arr, margin),
        _window_max(gradr2.data, margin),
        _window_max(hess2r.data, margin),
        _window_max(f_arr, margin),
        _window_max(g_arr, margin),
        _window_max(j_arr, margin),
        area,
        sup_w,
    ])
    if not np.all(np.isfinite(row)):
        raise ValueError(f"non-finite diagnostics at t = {t:g}")
    return row


# ---------------------------------------------------------------------------
# curvature lower bound (comparison principle)
# ---------------------------------------------------------------------------

def theta_bound(k0: float, t) -> np.ndarray:
    """theta(t) = -k0 / (1 + k0 t), the comparison solution of
    d theta/dt = theta^2 from theta(0) = -k0."""
    t = np.asarray(t, dtype=float)
    return -k0 / (1.0 + k0 * t)


def _check_k0(series: DiagnosticSeries, k0: float):
    sup_r0 = max(abs(series.data[0, COLUMNS.index("sup_R")]),
                 abs(series.data[0, COLUMNS.index("inf_R")]))
    if k0 < sup_r0 * (1.0 - 1e-12):
        raise ValueError(
            f"k0 = {k0:g} is below the initial sup |R| = {sup_r0:g}; the "
            "lower bound only holds for k0 >= sup |R(., 0)|")
    if k0 < 0.0:
        raise ValueError(f"k0 must be >= 0, got {k0}")


def lower_bound_margin(series: DiagnosticSeries, k0: float) -> float:
    """min over rows of inf_R(t) + k0/(1 + k0 t); >= -tol empirically
    confirms R >= theta."""
    _check_k0(series, k0)
    inf_r = series.column("inf_R")
    return float(np.min(inf_r - theta_bound(k0, series.t)))


@dataclass(frozen=True)
class ComparisonVerdict:
    min_S: float
    k0: float
    tol: float
    passed: bool


def comparison_verify(series: DiagnosticSeries, k0: float,
                      tol: float) -> ComparisonVerdict:
    """S = R - theta stays >= -tol across the run (same data as
    lower_bound_margin, stated in S form)."""
    min_s = lower_bound_margin(series, k0)
    return ComparisonVerdict(min_S=min_s, k0=k0, tol=tol,
                             passed=bool(min_s >= -tol))


# ---------------------------------------------------------------------------
# decay envelopes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayReport:
    quantity: str
    p: float
    envelope_C: float
    tail_monotone: bool
    fitted_slope: float


def _tail_rows(t: np.ndarray, tail_frac: float) -> np.ndarray:
    t_split = t[0] + (t[-1] - t[0]) * (1.0 - tail_frac)
    return np.nonzero(t >= t_split - 1e-12)[0]


def decay_envelope(series: DiagnosticSeries, quantity: str, p: float,
                   tail_frac: float = 0.5,
                   mono_slack: float = 1e-2) -> DecayReport:
    """Envelope C = max Q(1+t)^p, tail monotonicity, and log-log slope.

    Tail monotonicity holds when no later value of Q(1+t)^p in the final
    `tail_frac` of the run exceeds the running minimum by more than the
    relative slack.  The slope fits log Q against log(1+t) over the same
    tail (NaN when Q touches 0 there, e.g. exactly flat runs).
    """
    q = series.column(quantity)
    t = series.t
    envelope = q * (1.0 + t) ** p
    tail = _tail_rows(t, tail_frac)
    if tail.size < 3:
        raise ValueError(
            f"series too short for the decay fit: {tail.size} rows in the "
            f"final {tail_frac:g} of the run, need >= 3")
    e_tail = envelope[tail]
    # no later value may exceed the running minimum by the relative slack
    running_min = np.minimum.accumulate(e_tail)
    monotone = bool(np.all(
        e_tail[1:] <= running_min[:-1] * (1.0 + mono_slack) + 1e-300))
    q_tail = q[tail]
    if np.any(q_tail <= 0.0):
        slope = float("nan")
    else:
        slope = float(np.polyfit(np.log1p(t[tail]), np.log(q_tail), 1)[0])
    return DecayReport(quantity=quantity, p=float(p),
                       envelope_C=float(envelope.max()),
                       tail_monotone=monotone, fitted_slope=slope)


# ---------------------------------------------------------------------------
# maximum principles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MP1Verdict:
    sup_w0: float
    worst_sup_w: float
    tol: float
    passed: bool


def mp1_verify(series: DiagnosticSeries, tol: float) -> MP1Verdict:
    """Heat companion bound: sup |w(t)| <= sup |w(0)| (1 + tol) for all t."""
    sup_w = series.column("sup_w")
    sup_w0 = float(sup_w[0])
    worst = float(sup_w.max())
    passed = bool(worst <= sup_w0 * (1.0 + tol) + 1e-300)
    return MP1Verdict(sup_w0=sup_w0, worst_sup_w=worst, tol=tol,
                      passed=passed)


def barrier_eta(eps: float, spec: GridSpec) -> ScalarField:
    """eta = eps ln(1 + |x|^2): nonnegative, zero exactly at the origin
    (which must be a grid node), growing to infinity."""
    if not eps > 0.0:
        raise ValueError(f"barrier needs eps > 0, got {eps}")
    spec.node_at(0.0, 0.0)  # raises unless the origin is a node
    X, Y = spec.meshgrid()
    return ScalarField(spec, eps * np.log1p(X * X + Y * Y))


@dataclass(frozen=True)
class BarrierVerdict:
    sup_abs_u: float
    uniform_bound: float  # e^{2M} max lap(eta): certifies lap_g eta <= bound
    tol: float
    eta_origin: float
    eta_min: float
    passed: bool


def barrier_check(eta: ScalarField, m: ConformalMetric, tol: float,
                  bc=None, margin: int = 1,
                  sup_abs_u: float | None = None) -> BarrierVerdict:
    """Certify eta as a barrier for every metric with sup |u| <= M.

    M defaults to sup |u| of the metric passed in; a run-wide M may be
    supplied instead.  Since lap_g eta = e^{-2u} lap(eta) <= e^{2M}
    lap(eta) pointwise (lap eta >= 0 for this barrier), the check is the
    uniform bound e^{2M} max lap(eta) <= 1 + tol, together with eta >= 0
    and eta(origin) = 0.
    """
    if eta.spec != m.spec:
        raise ValueError("barrier and metric live on different grids")
    if bc is None:
        bc = BoundaryCondition.linear_extrapolate()
    i0, j0 = eta.spec.node_at(0.0, 0.0)
    eta_origin = float(eta.data[j0, i0])
    eta_min = float(eta.data.min())
    M = float(np.abs(m.u.data).max()) if sup_abs_u is None else float(sup_abs_u)
    lap_eta = laplacian(eta, bc)
    bound = float(np.exp(2.0 * M)) * _window_max(lap_eta.data, margin)
    passed = (bound <= 1.0 + tol) and eta_min >= -1e-300 \
        and abs(eta_origin) <= 1e-12
    return BarrierVerdict(sup_abs_u=M, uniform_bound=bound, tol=tol,
                          eta_origin=eta_origin, eta_min=eta_min,
                          passed=bool(passed))


# ---------------------------------------------------------------------------
# Hsu condition (ii) and the Shi window
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ABVerdict:
    max_excess: float
    tol: float
    n_times: int
    passed: bool


def aronson_benilan_check(snapshots, tol: float) -> ABVerdict:
    """max over interior snapshot times and nodes of d_t v - v/t (<= tol
    passes).  `snapshots` is a sequence of (t, u-field) with t increasing;
    d_t v uses the centered two-point slope across each interior time."""
    snaps = [(float(t), f) for t, f in snapshots]
    if len(snaps) < 3:
        raise ValueError("need >= 3 snapshots for centered time differences")
    if not all(b[0] > a[0] for a, b in zip(snaps, snaps[1:])):
        raise ValueError("snapshot times must be strictly increasing")
    worst = -np.inf
    n_times = 0
    for (tm, fm), (tc, fc), (tp, fp) in zip(snaps, snaps[1:], snaps[2:]):
        if tc <= 0.0:
            continue
        v_m = np.exp(2.0 * fm.data)
        v_c = np.exp(2.0 * fc.data)
        v_p = np.exp(2.0 * fp.data)
        dvdt = (v_p - v_m) / (tp - tm)
        worst = max(worst, float((dvdt - v_c / tc).max()))
        n_times += 1
    if n_times == 0:
        raise ValueError("no snapshot times with t > 0 to check")
    return ABVerdict(max_excess=worst, tol=tol, n_times=n_times,
                     passed=bool(worst <= tol))


@dataclass(frozen=True)
class ShiReport:
    m: int
    K: float
    window_t_max: float
    n_rows: int


def shi_window_check(series: DiagnosticSeries, m: int, k0: float,
                     window_t_max: float | None = None) -> ShiReport:
    """Empirical K with |grad^m R| <= K / sqrt(t^m) on an early window.

    Report-only: no constant is asserted.  The window defaults to
    t <= 1/k0 (the natural short-time scale of data with sup |R_0| = k0),
    or the whole series when k0 = 0.
    """
    if m not in (1, 2):
        raise ValueError(f"shi window supports m in {{1, 2}}, got {m}")
    col = "sup_gradR2" if m == 1 else "sup_hess2R"
    if window_t_max is None:
        window_t_max = 1.0 / k0 if k0 > 0.0 else float(series.t[-1])
    t = series.t
    mask = (t > 0.0) & (t <= window_t_max + 1e-12)
    if not np.any(mask):
        raise ValueError(
            f"no rows with 0 < t <= {window_t_max:g} in the series")
    q = np.sqrt(series.column(col)[mask])
    k_emp = float(np.max(q * t[mask] ** (m / 2.0)))
    return ShiReport(m=m, K=k_emp, window_t_max=float(window_t_max),
                     n_rows=int(mask.sum()))


# ---------------------------------------------------------------------------
# Hsu-profile fit (conjecture explorer) and the flatness certificate
# ---------------------------------------------------------------------------

def hsu_fit(state, beta: float, window_margin: int):
    """Least-squares k for the model v = 2/(beta (|x|^2 + k)) on the
    window; returns (k_fit, residual) with residual = sup |v - model|.

    The model is linear in k after inversion: 2/(beta v) - |x|^2 = k, so
    k_fit is the window mean of the left side.
    """
    m = state if isinstance(state, ConformalMetric) else state.metric
    if not beta > 0.0:
        raise ValueError(f"hsu fit needs beta > 0, got {beta}")
    if window_margin < 0:
        raise ValueError("window margin must be >= 0")
    spec = m.spec
    X, Y = spec.meshgrid()
    r2 = X * X + Y * Y
    v = np.exp(2.0 * m.u.data)
    win = (slice(window_margin, -window_margin or None),) * 2
    z = 2.0 / (beta * v[win]) - r2[win]
    if z.size == 0:
        raise ValueError(f"margin {window_margin} leaves an empty window")
    k_fit = float(z.mean())
    model = 2.0 / (beta * (r2[win] + k_fit))
    residual = float(np.abs(v[win] - model).max())
    return k_fit, residual


@dataclass(frozen=True)
class FlatnessCertificate:
    max_violation: float   # of |f(x) - f(x0)| <= d(x, x0) sup |grad f|_g
    sup_abs_R: float
    osc_f: float           # sup f - inf f on the window
    f_center: float        # the would-be limiting constant f(x0, t)
    sup_grad_f: float      # sup |grad f|_g on the window
    t: float


def flatness_certificate(state, x0: tuple[float, float], margin: int,
                         bc=None,
                         dist: DistanceField | None = None
                         ) -> FlatnessCertificate:
    """Check the distance-gradient bound and summarize near-flatness.

    For every window node x: |f(x,t) - f(x0,t)| <= d_t(x,x0) sup |grad f|_g
    up to discretization error (the geodesic distance is itself a grid
    overestimate, which only helps).  Also reports sup |R|, the
    oscillation of f on the window, and f(x0,t): together these certify
    that the metric is close to the constant conformal metric
    e^{-f(x0,t)} g_E on the window.
    """
    m = state if isinstance(state, ConformalMetric) else state.metric
    if bc is None:
        bc = getattr(state, "bc", None)
    if bc is None:
        raise ValueError("flatness certificate needs a boundary condition")
    spec = m.spec
    i0, j0 = spec.node_at(x0[0], x0[1])
    f = potential_f(m)
    gradf2 = metric_grad_norm_sq(f, m, bc)
    sup_grad = float(np.sqrt(_window_max(gradf2.data, margin)))
    if dist is None:
        dist = geodesic_distance(m, x0)
    win = (slice(margin, -margin or None),) * 2
    df = np.abs(f.data[win] - f.data[j0, i0])
    viol = df - dist.field.data[win] * sup_grad
    r = scalar_curvature(m, bc)
    return FlatnessCertificate(
        max_violation=float(viol.max()),
        sup_abs_R=float(np.abs(r.data[win]).max()),
        osc_f=float(f.data[win].max() - f.data[win].min()),
        f_center=float(f.data[j0, i0]),
        sup_grad_f=sup_grad,
        t=m.t)


# ---------------------------------------------------------------------------
# aggregated report for the maximum-principle lab
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MPReport:
    comparison: ComparisonVerdict
    barrier_pass: BarrierVerdict
    barrier_fail: BarrierVerdict
    mp1: MP1Verdict | None
    sup_w_trajectory: tuple[float, ...]

    @property
    def all_passed(self) -> bool:
        ok = self.comparison.passed and self.barrier_pass.passed \
            and not self.barrier_fail.passed
        if self.mp1 is not None:
            ok = ok and self.mp1.passed
        return ok

    def format_text(self) -> str:
        lines = ["maximum principle lab report"]
        c = self.comparison
        lines.append(
            f"  comparison S = R - theta: min S = {c.min_S:.6g} "
            f"(k0 = {c.k0:.6g}, tol = {c.tol:g}) -> "
            f"{'pass' if c.passed else 'FAIL'}")
        for tag, b, want in (("barrier eps_ok", self.barrier_pass, True),
                             ("barrier eps_big", self.barrier_fail, False)):
            verdict = "pass" if b.passed == want else "FAIL"
            lines.append(
                f"  {tag}: uniform bound {b.uniform_bound:.6g} vs 1 + "
                f"{b.tol:g} (M = {b.sup_abs_u:.6g}, expected "
                f"{'<=' if want else '>'}) -> {verdict}")
        if self.mp1 is not None:
            w = self.mp1
            lines.append(
                f"  heat sup bound: worst sup|w| = {w.worst_sup_w:.6g} vs "
                f"{w.sup_w0:.6g} (1 + {w.tol:g}) -> "
                f"{'pass' if w.passed else 'FAIL'}")
        lines.append(f"  overall: {'pass' if self.all_passed else 'FAIL'}")
        return "\n".join(lines)
