"""Experiment runner: configuration, persistence, and check suites.

Subcommands map one experiment family each:

    run           integrate a preset, record diagnostics, run the enabled
                  checks (curvature lower bound, heat sup bound, area
                  drift, decay envelopes, flatness certificate, the
                  d_t v <= v/t inequality), write series + snapshots +
                  manifest + figures
    verify-exact  PDE-residual convergence oracle across grids
    mp-lab        maximum-principle lab: comparison bound, barrier
                  certificates (positive and negative), heat sup bound
    aperture      geodesic distance + circle-length + slope fit
    decay-report  envelope/fit pipeline over a stored series CSV
    conjecture    profile-parameter fit trajectory (report-only)

Configuration is INI-style with sections [grid], [flow], [checks],
[output]; every key has a default (see --help); command-line flags and
repeatable --set section.key=value overrides beat file values.  The
effective configuration is echoed into the run manifest, which is written
atomically at run end even when the run aborts.

Output root: --out, else $RICCI2D_OUT/<command>, else ./runs/<command>.
All numeric outputs are CSV; figures are PNGs saved alongside them.

Exit codes: 0 every enabled check passed; 1 a check failed; 2
configuration error; 3 numerical abort (blow-up or run guard).
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
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
)
from .conformal import ConformalMetric
from .exact import hsu_sandwich_u, parse_preset, pde_residual, sample_to_grid
from .flow import (
    EvolveResult,
    FlowBlowupError,
    FlowState,
    GuardExceededError,
    Scheme,
    StepperConfig,
    evolve,
    initial_state,
    step,
)
from .geometry import aperture_estimate, geodesic_distance, max_usable_radius
from .grid import (
    BCKind,
    BoundaryCondition,
    GridSpec,
    ScalarField,
    write_field_csv,
)
from .report import (
    save_aperture_figure,
    save_conjecture_figure,
    save_decay_figure,
    save_field_figure,
    save_residual_figure,
    save_series_figure,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

ENV_OUT_ROOT = "RICCI2D_OUT"

DEFAULTS = {
    "grid": {
        "nx": "128",            # nodes in x (>= 8; even for periodic)
        "ny": "128",            # nodes in y
        "half_width": "8.0",    # centered grid on [-L, L) with h = 2L/nx
        "h": "",                # set h, x0, y0 to place the grid explicitly
        "x0": "",
        "y0": "",
    },
    "flow": {
        "preset": "bump:0.5:1",   # flat[:c] cigar[:rate] hsu:b:k bump:A:s
                                  # hsu-sandwich:b:k1:k2
        "bc": "dirichlet-frozen",  # dirichlet-frozen|periodic|linear-extrapolate
        "scheme": "heun",          # heun|euler
        "cfl_safety": "0.9",
        "t_end": "5.0",
        "snapshots": "",           # comma list of times; default "0,<t_end>"
        "cadence": "0.05",         # diagnostic recording interval
        "margin": "4",             # interior window margin (nodes)
        "lam": "4.0",              # weight in J = t^4 |grad R|^2 + lam t^3 R^2
        "companion": "none",       # none | random:<seed>  (heat companion w)
        "dt_override": "",         # fixed dt bypassing stability (control runs)
        "max_steps": "5000000",
        "max_wall_s": "",
    },
    "checks": {
        "lower_bound": "yes",      # R >= -k0/(1+k0 t) with k0 = sup |R_0|
        "lower_bound_tol": "1e-3",
        "mp1_tol": "1e-6",         # heat companion sup bound (when w runs)
        "area_tol": "1e-4",        # relative drift bound (periodic runs)
        "decay": "no",             # envelope + tail monotonicity checks
        "decay_targets": "sup_gradf2:1 sup_H:1 sup_gradR2:3 sup_hess2R:4",
        "mono_slack": "1e-2",
        "tail_frac": "0.5",
        "slope_quantity": "",      # optional log-log slope gate, e.g. sup_H
        "slope_max": "",
        "flatness": "no",          # distance-gradient certificate at t_end
        "flatness_tol": "1e-2",
        "ab": "no",                # d_t v <= v/t over snapshots
        "ab_tol": "1e-6",
    },
    "output": {
        "dir": "",
    },
}


class ConfigError(Exception):
    pass


def _defaults_epilog() -> str:
    lines = ["configuration keys and defaults:"]
    for sect, keys in DEFAULTS.items():
        lines.append(f"  [{sect}]")
        for k, v in keys.items():
            lines.append(f"    {k} = {v if v else '(unset)'}")
    return "\n".join(lines)


def _load_config(path: str | None, overrides) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_dict(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
        for sect in cp.sections():
            if sect not in DEFAULTS:
                raise ConfigError(f"unknown config section [{sect}]")
            for key in cp[sect]:
                if key not in DEFAULTS[sect]:
                    raise ConfigError(f"unknown config key {sect}.{key}")
    for item in overrides or ():
        target, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set needs section.key=value, got {item!r}")
        sect, sep2, key = target.strip().partition(".")
        if not sep2 or sect not in DEFAULTS or key not in DEFAULTS[sect]:
            raise ConfigError(f"unknown config key {target.strip()!r}")
        cp[sect][key] = value.strip()
    return cp


def _apply_flag(cp, sect: str, key: str, value) -> None:
    if value is not None:
        cp[sect][key] = str(value)


def _get_float(cp, sect, key) -> float:
    raw = cp[sect][key]
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{sect}.{key} must be a number, got {raw!r}") from None


def _get_int(cp, sect, key) -> int:
    raw = cp[sect][key]
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{sect}.{key} must be an integer, got {raw!r}") from None


def _get_bool(cp, sect, key) -> bool:
    try:
        return cp.getboolean(sect, key)
    except ValueError:
        raise ConfigError(f"{sect}.{key} must be yes/no, "
                          f"got {cp[sect][key]!r}") from None


def _build_grid(cp) -> GridSpec:
    nx, ny = _get_int(cp, "grid", "nx"), _get_int(cp, "grid", "ny")
    try:
        if cp["grid"]["h"]:
            x0 = _get_float(cp, "grid", "x0") if cp["grid"]["x0"] else 0.0
            y0 = _get_float(cp, "grid", "y0") if cp["grid"]["y0"] else 0.0
            return GridSpec(nx=nx, ny=ny, h=_get_float(cp, "grid", "h"),
                            x0=x0, y0=y0)
        if nx != ny:
            raise ConfigError("the centered convention needs nx == ny; "
                              "set grid.h, x0, y0 for non-square grids")
        return GridSpec.centered(nx, _get_float(cp, "grid", "half_width"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _initial_u(preset: str, spec: GridSpec):
    """(u0, exact solution or None) for a preset string."""
    try:
        if preset.startswith("hsu-sandwich:"):
            args = preset.split(":")[1:]
            if len(args) != 3:
                raise ConfigError(
                    f"hsu-sandwich takes beta:k1:k2, got {preset!r}")
            beta, k1, k2 = (float(a) for a in args)
            return hsu_sandwich_u(spec, beta, k1, k2), None
        sol = parse_preset(preset)
        return sample_to_grid(sol, spec, 0.0), sol
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_bc(kind: str, u0: ScalarField) -> BoundaryCondition:
    if kind == "periodic":
        if u0.spec.nx % 2 or u0.spec.ny % 2:
            raise ConfigError("periodic boundary requires even nx and ny")
        return BoundaryCondition.periodic()
    if kind == "dirichlet-frozen":
        return BoundaryCondition.dirichlet_frozen(u0)
    if kind == "linear-extrapolate":
        return BoundaryCondition.linear_extrapolate()
    raise ConfigError(f"unknown boundary kind {kind!r}")


def _build_scheme(name: str) -> Scheme:
    try:
        return Scheme(name)
    except ValueError:
        raise ConfigError(f"unknown scheme {name!r}; use heun or euler") \
            from None


def _build_companion(text: str, spec: GridSpec) -> ScalarField | None:
    if text in ("", "none"):
        return None
    if text.startswith("random"):
        parts = text.split(":")
        seed = int(parts[1]) if len(parts) > 1 else 0
        rng = np.random.default_rng(seed)
        return ScalarField(spec, rng.uniform(-1.0, 1.0, (spec.ny, spec.nx)))
    raise ConfigError(f"unknown companion {text!r}; use none or random:<seed>")


def _parse_snapshots(text: str, t_end: float) -> tuple[float, ...]:
    if not text.strip():
        return (0.0, t_end) if t_end > 0.0 else (0.0,)
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"bad snapshot list {text!r}") from None


def _parse_decay_targets(text: str):
    targets = []
    for tok in text.replace(",", " ").split():
        name, sep, p = tok.partition(":")
        if not sep:
            raise ConfigError(f"decay target needs name:p, got {tok!r}")
        targets.append((name, float(p)))
    if not targets:
        raise ConfigError("decay check enabled with no targets")
    return targets


def _resolve_out(out_arg: str | None, command: str) -> Path:
    root = os.environ.get(ENV_OUT_ROOT)
    if out_arg:
        p = Path(out_arg)
        if not p.is_absolute() and root:
            p = Path(root) / p
    else:
        p = Path(root) / command if root else Path("runs") / command
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_manifest(path: Path, sections) -> None:
    """Atomic write of INI-shaped manifest text (tmp file + rename)."""
    lines = []
    for name, items in sections:
        lines.append(f"[{name}]")
        for k, v in items:
            text = str(v)
            if "\n" in text:
                text = text.replace("\n", "\n    ")
            lines.append(f"{k} = {text}")
        lines.append("")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write("\n".join(lines))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _config_items(cp):
    items = []
    for sect in DEFAULTS:
        for key in DEFAULTS[sect]:
            items.append((f"{sect}.{key}", cp[sect][key]))
    return items


def _fixed_dt_loop(state: FlowState, scheme: Scheme, dt: float,
                   t_end: float, cadence: float, margin: int, lam: float,
                   max_steps: int) -> EvolveResult:
    """Fixed-dt driver for stability-override control runs: no clipping to
    events, records at cadence crossings, aborts on blow-up as usual."""
    rows = [record(state, margin, lam=lam)]
    next_record = cadence
    t0 = time.monotonic()
    while state.t < t_end - 1e-12:
        if state.step_count >= max_steps:
            raise GuardExceededError(f"step guard: {max_steps} steps")
        state = step(state, dt, scheme=scheme, enforce_stability=False)
        if state.t >= next_record - 1e-12:
            try:
                rows.append(record(state, margin, lam=lam))
            except ValueError as exc:
                raise FlowBlowupError(
                    f"diagnostics overflowed at t = {state.t:g}: {exc}",
                    state) from exc
            next_record += cadence
    series = DiagnosticSeries(np.vstack(rows))
    return EvolveResult(state=state, series=series, snapshots=(),
                        companion=None,
                        max_abs_u=float(np.abs(state.u.data).max()),
                        steps=state.step_count,
                        wall_s=time.monotonic() - t0)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    cp = _load_config(args.config, args.set)
    for flag, sect, key in (
            (args.preset, "flow", "preset"), (args.t_end, "flow", "t_end"),
            (args.bc, "flow", "bc"), (args.scheme, "flow", "scheme"),
            (args.cadence, "flow", "cadence"), (args.margin, "flow", "margin"),
            (args.companion, "flow", "companion"),
            (args.dt_override, "flow", "dt_override"),
            (args.nx, "grid", "nx"), (args.ny, "grid", "ny"),
            (args.half_width, "grid", "half_width")):
        _apply_flag(cp, sect, key, flag)
    if args.nx is not None and args.ny is None:
        cp["grid"]["ny"] = str(args.nx)

    out = _resolve_out(args.out or cp["output"]["dir"] or None, "run")
    verdicts: list[tuple[str, str]] = []
    info: list[tuple[str, str]] = [("command", "run"),
                                   ("package_version", __version__)]
    termination = "config-error"
    exit_code = EXIT_CONFIG
    t_wall0 = time.monotonic()
    grid_items: list[tuple[str, str]] = []

    try:
        spec = _build_grid(cp)
        grid_items = [("nx", spec.nx), ("ny", spec.ny), ("h", repr(spec.h)),
                      ("x0", repr(spec.x0)), ("y0", repr(spec.y0))]
        preset = cp["flow"]["preset"]
        u0, _sol = _initial_u(preset, spec)
        bc = _build_bc(cp["flow"]["bc"], u0)
        scheme = _build_scheme(cp["flow"]["scheme"])
        t_end = _get_float(cp, "flow", "t_end")
        cadence = _get_float(cp, "flow", "cadence")
        margin = _get_int(cp, "flow", "margin")
        lam = _get_float(cp, "flow", "lam")
        snapshots = _parse_snapshots(cp["flow"]["snapshots"], t_end)
        companion = _build_companion(cp["flow"]["companion"], spec)
        max_steps = _get_int(cp, "flow", "max_steps")
        max_wall = (_get_float(cp, "flow", "max_wall_s")
                    if cp["flow"]["max_wall_s"] else None)
        state = initial_state(u0, bc)

        try:
            sc = StepperConfig(
                t_end=t_end, scheme=scheme,
                cfl_safety=_get_float(cp, "flow", "cfl_safety"),
                snapshot_times=snapshots, cadence=cadence,
                max_steps=max_steps, max_wall_s=max_wall)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

        try:
            if cp["flow"]["dt_override"]:
                result = _fixed_dt_loop(
                    state, scheme, _get_float(cp, "flow", "dt_override"),
                    t_end, cadence, margin, lam, max_steps)
            else:
                result = evolve(state, sc, companion=companion,
                                record_margin=margin, lam=lam)
        except FlowBlowupError as exc:
            termination = f"numerical-abort: {exc}"
            dump = exc.last_state.u
            write_field_csv(dump, out / "u_abort.csv")
            info.append(("abort_dump", "u_abort.csv"))
            return EXIT_NUMERIC
        except GuardExceededError as exc:
            termination = f"guard-exceeded: {exc}"
            return EXIT_NUMERIC

        series = result.series
        series.write_csv(out / "series.csv")
        for t_snap, u_snap in result.snapshots:
            write_field_csv(u_snap, out / f"u_t{t_snap:g}.csv")
        save_series_figure(series, out / "series.png")
        save_field_figure(result.state.u, f"u at t = {result.state.t:g}",
                          out / "u_final.png")
        info.extend([("steps", result.steps),
                     ("max_abs_u", _fmt(result.max_abs_u)),
                     ("scheme", scheme.value), ("preset", preset)])

        all_ok = True

        if _get_bool(cp, "checks", "lower_bound"):
            tol = _get_float(cp, "checks", "lower_bound_tol")
            k0 = max(abs(series.column("sup_R")[0]),
                     abs(series.column("inf_R")[0]))
            margin_val = lower_bound_margin(series, k0)
            ok = margin_val >= -tol
            all_ok &= ok
            verdicts.append(("lower_bound",
                             f"{'pass' if ok else 'FAIL'} "
                             f"(margin={_fmt(margin_val)}, k0={_fmt(k0)}, "
                             f"tol={_fmt(tol)})"))

        if companion is not None:
            v = mp1_verify(series, _get_float(cp, "checks", "mp1_tol"))
            all_ok &= v.passed
            verdicts.append(("mp1",
                             f"{'pass' if v.passed else 'FAIL'} "
                             f"(sup_w0={_fmt(v.sup_w0)}, "
                             f"worst={_fmt(v.worst_sup_w)}, "
                             f"tol={_fmt(v.tol)})"))

        if bc.kind is BCKind.PERIODIC:
            tol = _get_float(cp, "checks", "area_tol")
            area = series.column("area")
            drift = float(np.abs(area - area[0]).max() / area[0])
            ok = drift <= tol
            all_ok &= ok
            verdicts.append(("area_drift",
                             f"{'pass' if ok else 'FAIL'} "
                             f"(drift={_fmt(drift)}, tol={_fmt(tol)})"))

        if _get_bool(cp, "checks", "decay"):
            targets = _parse_decay_targets(cp["checks"]["decay_targets"])
            slack = _get_float(cp, "checks", "mono_slack")
            tail = _get_float(cp, "checks", "tail_frac")
            reports = [decay_envelope(series, name, p, tail_frac=tail,
                                      mono_slack=slack)
                       for name, p in targets]
            save_decay_figure(series, reports, out / "decay.png")
            for rep in reports:
                ok = rep.tail_monotone and np.isfinite(rep.envelope_C)
                all_ok &= ok
                verdicts.append((f"decay_{rep.quantity}",
                                 f"{'pass' if ok else 'FAIL'} "
                                 f"(p={rep.p:g}, C={_fmt(rep.envelope_C)}, "
                                 f"tail_monotone={rep.tail_monotone}, "
                                 f"slope={_fmt(rep.fitted_slope)})"))
            if cp["checks"]["slope_quantity"]:
                qname = cp["checks"]["slope_quantity"]
                smax = _get_float(cp, "checks", "slope_max")
                rep = next((r for r in reports if r.quantity == qname), None)
                if rep is None:
                    raise ConfigError(
                        f"slope_quantity {qname!r} is not a decay target")
                ok = rep.fitted_slope <= smax
                all_ok &= ok
                verdicts.append((f"slope_{qname}",
                                 f"{'pass' if ok else 'FAIL'} "
                                 f"(slope={_fmt(rep.fitted_slope)} vs "
                                 f"max {_fmt(smax)})"))

        if _get_bool(cp, "checks", "ab"):
            if len(result.snapshots) < 3:
                raise ConfigError("ab check needs >= 3 snapshot times")
            v = aronson_benilan_check(result.snapshots,
                                      _get_float(cp, "checks", "ab_tol"))
            all_ok &= v.passed
            verdicts.append(("aronson_benilan",
                             f"{'pass' if v.passed else 'FAIL'} "
                             f"(max_excess={_fmt(v.max_excess)}, "
                             f"tol={_fmt(v.tol)}, times={v.n_times})"))

        if _get_bool(cp, "checks", "flatness"):
            tol = _get_float(cp, "checks", "flatness_tol")
            cert = flatness_certificate(result.state, (0.0, 0.0), margin)
            ok = cert.max_violation <= tol
            all_ok &= ok
            verdicts.append(("flatness",
                             f"{'pass' if ok else 'FAIL'} "
                             f"(violation={_fmt(cert.max_violation)}, "
                             f"tol={_fmt(tol)}, "
                             f"sup_absR={_fmt(cert.sup_abs_R)}, "
                             f"osc_f={_fmt(cert.osc_f)}, "
                             f"f_center={_fmt(cert.f_center)})"))

        # report-only short-time derivative scale
        k0 = max(abs(series.column("sup_R")[0]),
                 abs(series.column("inf_R")[0]))
        for m_order in (1, 2):
            try:
                shi = shi_window_check(series, m_order, k0)
                verdicts.append((f"shi_m{m_order}",
                                 f"report (K={_fmt(shi.K)}, "
                                 f"window_t<={_fmt(shi.window_t_max)}, "
                                 f"rows={shi.n_rows})"))
            except ValueError:
                pass

        termination = "completed"
        exit_code = EXIT_OK if all_ok else EXIT_CHECK_FAILED
        return exit_code
    except ConfigError:
        termination = "config-error"
        exit_code = EXIT_CONFIG
        raise
    finally:
        if termination.startswith(("numerical-abort", "guard-exceeded")):
            exit_code = EXIT_NUMERIC
        info.extend([("termination", termination),
                     ("wall_s", _fmt(time.monotonic() - t_wall0)),
                     ("exit_code", exit_code)])
        _write_manifest(out / "manifest.txt",
                        [("run", info), ("grid", grid_items),
                         ("config", _config_items(cp)),
                         ("verdicts", verdicts)])


# ---------------------------------------------------------------------------
# verify-exact
# ---------------------------------------------------------------------------

def cmd_verify_exact(args) -> int:
    out = _resolve_out(args.out, "verify-exact")
    try:
        sol = parse_preset(args.preset)
        grids = [int(n) for n in args.grids.split(",") if n.strip()]
        if len(grids) < 1:
            raise ValueError("need at least one grid")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    residuals = []
    for n in grids:
        spec = GridSpec.centered(n, args.half_width)
        residuals.append(pde_residual(sol, spec, args.t, args.dt,
                                      margin=args.margin))
    with open(out / "residuals.csv", "w") as fh:
        fh.write("n,h,residual\n")
        for n, res in zip(grids, residuals):
            fh.write(f"{n},{2.0 * args.half_width / n:.17g},{res:.17g}\n")
    save_residual_figure(grids, residuals, out / "residuals.png")

    if all(r <= 1e-12 for r in residuals):
        print(f"verify-exact {args.preset}: all residuals <= 1e-12 "
              "(static solution) -> pass")
        return EXIT_OK
    ok = True
    for (n1, r1), (n2, r2) in zip(zip(grids, residuals),
                                  zip(grids[1:], residuals[1:])):
        ratio = r1 / r2 if r2 > 0.0 else math.inf
        in_band = 3.2 <= ratio <= 4.8
        ok &= in_band
        print(f"verify-exact {args.preset}: {n1}^2 -> {n2}^2 residual ratio "
              f"{ratio:.3f} (want [3.2, 4.8]) -> "
              f"{'pass' if in_band else 'FAIL'}")
    if len(grids) == 1:
        print(f"verify-exact {args.preset}: single grid, residual "
              f"{residuals[0]:.3e} (no ratio check)")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# mp-lab
# ---------------------------------------------------------------------------

def cmd_mp_lab(args) -> int:
    cp = _load_config(args.config, args.set)
    for flag, sect, key in (
            (args.preset, "flow", "preset"), (args.t_end, "flow", "t_end"),
            (args.nx, "grid", "nx"), (args.half_width, "grid", "half_width")):
        _apply_flag(cp, sect, key, flag)
    if args.nx is not None:
        cp["grid"]["ny"] = str(args.nx)
    if cp["flow"]["companion"] in ("", "none"):
        cp["flow"]["companion"] = "random:0"

    out = _resolve_out(args.out or cp["output"]["dir"] or None, "mp-lab")
    spec = _build_grid(cp)
    u0, _sol = _initial_u(cp["flow"]["preset"], spec)
    bc = _build_bc(cp["flow"]["bc"], u0)
    scheme = _build_scheme(cp["flow"]["scheme"])
    t_end = _get_float(cp, "flow", "t_end")
    margin = _get_int(cp, "flow", "margin")
    companion = _build_companion(cp["flow"]["companion"], spec)
    try:
        sc = StepperConfig(t_end=t_end, scheme=scheme,
                           cfl_safety=_get_float(cp, "flow", "cfl_safety"),
                           cadence=_get_float(cp, "flow", "cadence"),
                           max_steps=_get_int(cp, "flow", "max_steps"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    result = evolve(initial_state(u0, bc), sc, companion=companion,
                    record_margin=margin,
                    lam=_get_float(cp, "flow", "lam"))
    series = result.series
    series.write_csv(out / "series.csv")
    save_series_figure(series, out / "series.png")

    k0 = max(abs(series.column("sup_R")[0]),
             abs(series.column("inf_R")[0]))
    comparison = comparison_verify(
        series, k0, _get_float(cp, "checks", "lower_bound_tol"))
    M = result.max_abs_u
    eps_ok = math.exp(-2.0 * M) / 4.0 * 0.999
    eps_big = 2.0 * math.exp(-2.0 * M)
    barrier_tol = 1e-2
    metric = result.state.metric
    b_pass = barrier_check(barrier_eta(eps_ok, spec), metric, barrier_tol,
                           sup_abs_u=M)
    b_fail = barrier_check(barrier_eta(eps_big, spec), metric, barrier_tol,
                           sup_abs_u=M)
    mp1 = mp1_verify(series, _get_float(cp, "checks", "mp1_tol"))
    rep = MPReport(comparison=comparison, barrier_pass=b_pass,
                   barrier_fail=b_fail, mp1=mp1,
                   sup_w_trajectory=tuple(series.column("sup_w")))
    text = rep.format_text()
    (out / "mp_report.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK if rep.all_passed else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# aperture
# ---------------------------------------------------------------------------

def cmd_aperture(args) -> int:
    out = _resolve_out(args.out, "aperture")
    try:
        spec = GridSpec.centered(args.n, args.half_width)
        u0, _sol = _initial_u(args.preset, spec)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(str(exc)) from exc
    metric = ConformalMetric(u0, 0.0)
    dist = geodesic_distance(metric, (0.0, 0.0))
    if args.radii:
        radii = [float(r) for r in args.radii.split(",") if r.strip()]
    else:
        r_max = max_usable_radius(dist, margin=2)
        radii = list(np.linspace(r_max / 2.0, r_max, 5))
    report = aperture_estimate(metric, radii, dist=dist)
    with open(out / "aperture.csv", "w") as fh:
        fh.write("r_g,L,L/(2*pi*r_g)\n")
        for r, L, ratio in zip(report.radii, report.lengths, report.ratios):
            fh.write(f"{r:.17g},{L:.17g},{ratio:.17g}\n")
    save_aperture_figure(report, out / "aperture.png")
    print(f"aperture {args.preset}: estimate = {report.estimate:.4f} "
          f"over {len(radii)} radii in [{min(radii):.3g}, {max(radii):.3g}]")
    ok = True
    if args.expect_min is not None and report.estimate < args.expect_min:
        ok = False
    if args.expect_max is not None and report.estimate > args.expect_max:
        ok = False
    if not ok:
        print(f"aperture {args.preset}: estimate outside "
              f"[{args.expect_min}, {args.expect_max}] -> FAIL")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# decay-report
# ---------------------------------------------------------------------------

def cmd_decay_report(args) -> int:
    out = _resolve_out(args.out, "decay-report")
    try:
        series = DiagnosticSeries.read_csv(args.series)
        targets = _parse_decay_targets(args.targets)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    reports = [decay_envelope(series, name, p, tail_frac=args.tail_frac,
                              mono_slack=args.mono_slack)
               for name, p in targets]
    with open(out / "decay.csv", "w") as fh:
        fh.write("quantity,p,envelope_C,tail_monotone,fitted_slope\n")
        for rep in reports:
            fh.write(f"{rep.quantity},{rep.p:.17g},{rep.envelope_C:.17g},"
                     f"{str(rep.tail_monotone).lower()},"
                     f"{rep.fitted_slope:.17g}\n")
    save_decay_figure(series, reports, out / "decay.png")
    ok = True
    for rep in reports:
        line_ok = rep.tail_monotone and np.isfinite(rep.envelope_C)
        print(f"decay {rep.quantity}: C={rep.envelope_C:.6g} p={rep.p:g} "
              f"tail_monotone={rep.tail_monotone} "
              f"slope={rep.fitted_slope:.4g} -> "
              f"{'pass' if line_ok else 'FAIL'}")
        ok &= line_ok
    if args.slope_quantity:
        rep = next((r for r in reports if r.quantity == args.slope_quantity),
                   None)
        if rep is None:
            raise ConfigError(f"slope gate quantity {args.slope_quantity!r} "
                              "is not among the targets")
        gate_ok = rep.fitted_slope <= args.slope_max
        print(f"decay slope gate {rep.quantity}: {rep.fitted_slope:.4g} "
              f"<= {args.slope_max:g} -> {'pass' if gate_ok else 'FAIL'}")
        ok &= gate_ok
    if args.no_gate:
        return EXIT_OK
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# conjecture
# ---------------------------------------------------------------------------

def cmd_conjecture(args) -> int:
    out = _resolve_out(args.out, "conjecture")
    try:
        spec = GridSpec.centered(args.n, args.half_width)
        u0, _sol = _initial_u(args.preset, spec)
        beta = args.beta
        if beta is None:
            parts = args.preset.split(":")
            if parts[0] in ("hsu", "hsu-sandwich"):
                beta = float(parts[1])
            else:
                raise ConfigError("--beta is required for non-hsu presets")
    except (ValueError, ConfigError) as exc:
        raise ConfigError(str(exc)) from exc
    bc = BoundaryCondition.linear_extrapolate()
    margin = args.margin
    times, k_fits, residuals = [], [], []

    def collect(state):
        k, res = hsu_fit(state.metric, beta, margin)
        times.append(state.t)
        k_fits.append(k)
        residuals.append(res)

    state0 = initial_state(u0, bc)
    collect(state0)
    try:
        sc = StepperConfig(t_end=args.t_end, scheme=Scheme.HEUN,
                           cfl_safety=0.9, cadence=args.cadence)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    evolve(state0, sc, hooks=(collect,), record_margin=margin)

    with open(out / "conjecture.csv", "w") as fh:
        fh.write("t,k_fit,residual\n")
        for t, k, res in zip(times, k_fits, residuals):
            fh.write(f"{t:.17g},{k:.17g},{res:.17g}\n")
    save_conjecture_figure(times, k_fits, residuals, out / "conjecture.png")

    v_max = float(np.exp(2.0 * u0.interior(margin)).max())
    rel0 = residuals[0] / v_max if v_max > 0 else math.inf
    mismatch = rel0 > 0.05
    print(f"conjecture {args.preset}: k_fit(0)={k_fits[0]:.6g}, "
          f"k_fit({times[-1]:g})={k_fits[-1]:.6g}, "
          f"initial relative residual {rel0:.3g}"
          + (" [model-mismatch]" if mismatch else ""))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ricci2d",
        description="Numerical laboratory for conformal curvature flow on "
                    "the plane",
        epilog=_defaults_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--set", action="append", metavar="SECT.KEY=VALUE",
                       help="override a config value (repeatable)")
        p.add_argument("--out", help="output directory "
                       f"(default ${ENV_OUT_ROOT}/<command> or "
                       "runs/<command>)")

    p = sub.add_parser("run", help="integrate a preset and run checks")
    add_config_args(p)
    p.add_argument("--preset")
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--bc")
    p.add_argument("--scheme")
    p.add_argument("--cadence", type=float)
    p.add_argument("--margin", type=int)
    p.add_argument("--companion")
    p.add_argument("--dt-override", type=float, dest="dt_override")
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--half-width", type=float, dest="half_width")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify-exact",
                       help="PDE-residual convergence across grids")
    p.add_argument("--preset", default="cigar")
    p.add_argument("--grids", default="128,256",
                   help="comma list of nodes per side")
    p.add_argument("--half-width", type=float, default=8.0,
                   dest="half_width")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--margin", type=int, default=4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify_exact)

    p = sub.add_parser("mp-lab", help="maximum-principle checks")
    add_config_args(p)
    p.add_argument("--preset")
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--nx", type=int)
    p.add_argument("--half-width", type=float, dest="half_width")
    p.set_defaults(func=cmd_mp_lab)

    p = sub.add_parser("aperture", help="geodesic circle-length slope fit")
    p.add_argument("--preset", default="flat")
    p.add_argument("--n", type=int, default=256, help="nodes per side")
    p.add_argument("--half-width", type=float, default=8.0,
                   dest="half_width")
    p.add_argument("--radii", help="comma list of geodesic radii "
                   "(default: 5 radii up to the largest usable)")
    p.add_argument("--expect-min", type=float)
    p.add_argument("--expect-max", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_aperture)

    p = sub.add_parser("decay-report",
                       help="decay envelopes over a stored series")
    p.add_argument("--series", required=True, help="series CSV path")
    p.add_argument("--targets",
                   default="sup_gradf2:1 sup_H:1 sup_gradR2:3 sup_hess2R:4")
    p.add_argument("--tail-frac", type=float, default=0.5, dest="tail_frac")
    p.add_argument("--mono-slack", type=float, default=1e-2,
                   dest="mono_slack")
    p.add_argument("--slope-quantity", dest="slope_quantity")
    p.add_argument("--slope-max", type=float, default=-0.8,
                   dest="slope_max")
    p.add_argument("--no-gate", action="store_true",
                   help="report only, always exit 0")
    p.add_argument("--out")
    p.set_defaults(func=cmd_decay_report)

    p = sub.add_parser("conjecture",
                       help="profile-fit trajectories (report only)")
    p.add_argument("--preset", default="hsu-sandwich:2:2:4")
    p.add_argument("--beta", type=float)
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--half-width", type=float, default=8.0,
                   dest="half_width")
    p.add_argument("--t-end", type=float, default=1.0, dest="t_end")
    p.add_argument("--cadence", type=float, default=0.1)
    p.add_argument("--margin", type=int, default=4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_conjecture)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FlowBlowupError, GuardExceededError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
