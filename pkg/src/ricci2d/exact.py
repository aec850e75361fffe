"""Closed-form reference geometries: solver oracles and run presets.

Four kinds, written in the log conformal factor u (so v = e^{2u}):

    flat(c)            u = c                                   static
    cigar(rate)        u = -ln(|x|^2 + e^{rate t}) / 2         all t >= 0
    hsu(beta, k)       v = 2 / (beta (|x|^2 + k))              t = 0 data
    bump(A, sigma)     u = A exp(-|x|^2 / sigma^2)             t = 0 data

The cigar with rate = 4 solves d_t v = lap ln v exactly and keeps
sup R = 4 for all time (curvature never decays; its u is unbounded
below).  Any other rate is a deliberately broken control whose PDE
residual stays bounded away from zero as the grid refines.  Closed-form
curvatures:

    cigar   R = 4 e^{rate t} / (|x|^2 + e^{rate t})   (4 at the origin,
            2 on the circle |x|^2 = e^{rate t}, any rate)
    hsu     R = 2 beta k / (|x|^2 + k)
    bump    R = -2 e^{-2u} lap(u),
            lap(u) = (4A/sigma^2) e^{-r^2/sigma^2} (r^2/sigma^2 - 1)

Preset strings: ``flat``, ``flat:<c>``, ``cigar``, ``hsu:<beta>:<k>``,
``bump:<A>:<sigma>``.  The conjecture runner additionally accepts
``hsu-sandwich:<beta>:<k1>:<k2>``, initial data squeezed between two hsu
profiles (k varies radially from k1 to k2), built by
:func:`hsu_sandwich_u`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, ScalarField

# below this conformal factor the far field is numerically degenerate
V_UNDERFLOW = 1e-300


class Kind(enum.Enum):
    FLAT = "flat"
    CIGAR = "cigar"
    HSU = "hsu"
    BUMP = "bump"


@dataclass(frozen=True)
class ExactSolution:
    kind: Kind
    c: float = 0.0       # flat: constant u
    rate: float = 4.0    # cigar: exponent of e^{rate t}
    beta: float = 0.0    # hsu
    k: float = 0.0       # hsu
    A: float = 0.0       # bump amplitude
    sigma: float = 1.0   # bump width

    def __post_init__(self):
        if self.kind is Kind.HSU and not (self.beta > 0.0 and self.k > 0.0):
            raise ValueError("hsu profile needs beta > 0 and k > 0")
        if self.kind is Kind.BUMP and not self.sigma > 0.0:
            raise ValueError("bump needs sigma > 0")
        if self.kind is Kind.CIGAR and not self.rate > 0.0:
            raise ValueError("cigar needs rate > 0")

    @property
    def time_parametrized(self) -> bool:
        """Whether eval at t > 0 is defined (flat is trivially static)."""
        return self.kind in (Kind.FLAT, Kind.CIGAR)


def flat(c: float = 0.0) -> ExactSolution:
    return ExactSolution(Kind.FLAT, c=float(c))


def cigar(rate: float = 4.0) -> ExactSolution:
    return ExactSolution(Kind.CIGAR, rate=float(rate))


def hsu_phi(beta: float, k: float) -> ExactSolution:
    return ExactSolution(Kind.HSU, beta=float(beta), k=float(k))


def gaussian_bump(A: float, sigma: float) -> ExactSolution:
    return ExactSolution(Kind.BUMP, A=float(A), sigma=float(sigma))


def _check_time(sol: ExactSolution, t: float):
    if t < 0.0:
        raise ValueError(f"time must be >= 0, got {t}")
    if t > 0.0 and not sol.time_parametrized:
        raise ValueError(f"{sol.kind.value} defines initial data only; "
                         f"cannot evaluate at t = {t}")


def eval_u(sol: ExactSolution, x, y, t: float = 0.0):
    """Closed-form u at (x, y, t); arrays broadcast."""
    _check_time(sol, t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = x * x + y * y
    if sol.kind is Kind.FLAT:
        return np.broadcast_to(np.float64(sol.c), r2.shape).copy() \
            if r2.shape else float(sol.c)
    if sol.kind is Kind.CIGAR:
        return -0.5 * np.log(r2 + math.exp(sol.rate * t))
    if sol.kind is Kind.HSU:
        return 0.5 * np.log(2.0 / (sol.beta * (r2 + sol.k)))
    return sol.A * np.exp(-r2 / sol.sigma ** 2)


def eval_R(sol: ExactSolution, x, y, t: float = 0.0):
    """Closed-form scalar curvature at (x, y, t)."""
    _check_time(sol, t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = x * x + y * y
    if sol.kind is Kind.FLAT:
        return np.zeros_like(r2) if r2.shape else 0.0
    if sol.kind is Kind.CIGAR:
        # R depends on the slice only: u = -ln(r^2 + a)/2 has
        # R = -2 e^{-2u} lap u = 4a/(r^2 + a) whatever the rate
        a = math.exp(sol.rate * t)
        return 4.0 * a / (r2 + a)
    if sol.kind is Kind.HSU:
        return 2.0 * sol.beta * sol.k / (r2 + sol.k)
    s2 = sol.sigma ** 2
    lap_u = (4.0 * sol.A / s2) * np.exp(-r2 / s2) * (r2 / s2 - 1.0)
    return -2.0 * np.exp(-2.0 * eval_u(sol, x, y, 0.0)) * lap_u


def sample_to_grid(sol: ExactSolution, spec: GridSpec,
                   t: float = 0.0) -> ScalarField:
    """u sampled at the grid nodes; rejects numerically degenerate tails."""
    X, Y = spec.meshgrid()
    u = np.asarray(eval_u(sol, X, Y, t), dtype=float)
    if np.any(np.exp(2.0 * u) <= V_UNDERFLOW):
        raise ValueError("conformal factor underflows on this domain; "
                         "shrink the domain or rescale the solution")
    return ScalarField(spec, u)


def pde_residual(sol: ExactSolution, spec: GridSpec, t: float, dt: float,
                 margin: int = 4) -> float:
    """Sup of |d_t v - lap ln v| on the interior window.

    d_t v uses the centered difference (v(t+dt) - v(t-dt)) / (2 dt); the
    Laplacian is the 5-point stencil, so for a true solution the residual
    is pure discretization error, O(h^2) + O(dt^2).
    """
    if not sol.time_parametrized:
        raise ValueError(f"{sol.kind.value} is initial data only; "
                         "the PDE residual needs a time-parametrized solution")
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if t - dt < 0.0:
        raise ValueError(f"t - dt = {t - dt} < 0: centered difference "
                         "needs t >= dt")
    X, Y = spec.meshgrid()
    v_minus = np.exp(2.0 * np.asarray(eval_u(sol, X, Y, t - dt)))
    v_plus = np.exp(2.0 * np.asarray(eval_u(sol, X, Y, t + dt)))
    ln_v = 2.0 * np.asarray(eval_u(sol, X, Y, t))
    dv_dt = (v_plus - v_minus) / (2.0 * dt)
    # interior 5-point Laplacian; the window margin keeps the ring out
    h2 = spec.h * spec.h
    lap = np.zeros_like(ln_v)
    lap[1:-1, 1:-1] = (ln_v[1:-1, 2:] + ln_v[1:-1, :-2] + ln_v[2:, 1:-1]
                       + ln_v[:-2, 1:-1] - 4.0 * ln_v[1:-1, 1:-1]) / h2
    if margin < 1:
        raise ValueError("residual window needs margin >= 1")
    res = np.abs(dv_dt - lap)[margin:-margin, margin:-margin]
    if res.size == 0:
        raise ValueError(f"margin {margin} leaves an empty window")
    return float(res.max())


@dataclass(frozen=True)
class HypothesesReport:
    """Analytic classification of the flat-convergence hypotheses.

    bounded_u0: sup |u(., 0)| < infinity.
    bounded_R0: sup |R(., 0)| < infinity.
    divergent_area: integral of e^{2 u0} over the plane diverges (the
    criterion for the flow to exist for all positive times).
    """

    kind: str
    bounded_u0: bool
    bounded_R0: bool
    divergent_area: bool


def bounded_hypotheses_report(sol: ExactSolution) -> HypothesesReport:
    """Per-kind flags, hard-coded from the closed forms.

    flat:  u constant, R = 0, area integral of a constant diverges.
    cigar: u -> -infinity as |x| -> infinity (NOT bounded), R in (0, 4]
           bounded, area integral ~ pi ln r diverges.
    hsu:   u unbounded below like the cigar; R in (0, 2 beta] bounded;
           area integral ~ (2 pi / beta) ln r diverges.
    bump:  u and R bounded; u bounded forces a divergent area integral.
    """
    if sol.kind is Kind.FLAT:
        return HypothesesReport("flat", True, True, True)
    if sol.kind is Kind.CIGAR:
        return HypothesesReport("cigar", False, True, True)
    if sol.kind is Kind.HSU:
        return HypothesesReport("hsu", False, True, True)
    return HypothesesReport("bump", True, True, True)


def parse_preset(text: str) -> ExactSolution:
    """Parse a preset string into an ExactSolution.

    Grammar: ``flat`` | ``flat:<c>`` | ``cigar`` | ``cigar:<rate>`` |
    ``hsu:<beta>:<k>`` | ``bump:<A>:<sigma>``.
    """
    parts = text.strip().split(":")
    name, args = parts[0], parts[1:]
    try:
        if name == "flat" and len(args) in (0, 1):
            return flat(float(args[0]) if args else 0.0)
        if name == "cigar" and len(args) in (0, 1):
            return cigar(float(args[0]) if args else 4.0)
        if name == "hsu" and len(args) == 2:
            return hsu_phi(float(args[0]), float(args[1]))
        if name == "bump" and len(args) == 2:
            return gaussian_bump(float(args[0]), float(args[1]))
    except ValueError as exc:
        raise ValueError(f"bad preset {text!r}: {exc}") from exc
    raise ValueError(
        f"unknown preset {text!r}; expected flat[:c], cigar[:rate], "
        "hsu:<beta>:<k>, or bump:<A>:<sigma>")


def hsu_sandwich_u(spec: GridSpec, beta: float, k1: float,
                   k2: float) -> ScalarField:
    """Initial data squeezed between hsu profiles with parameters k1, k2.

    v0 = 2 / (beta (|x|^2 + k(x))) with k(x) = k1 + (k2 - k1) r^2/(1 + r^2),
    so v0 sits pointwise between phi_{beta,min(k1,k2)} and
    phi_{beta,max(k1,k2)} and is not itself an exact profile.
    """
    if not (beta > 0.0 and k1 > 0.0 and k2 > 0.0):
        raise ValueError("sandwich needs beta, k1, k2 > 0")
    X, Y = spec.meshgrid()
    r2 = X * X + Y * Y
    k_of_x = k1 + (k2 - k1) * r2 / (1.0 + r2)
    u = 0.5 * np.log(2.0 / (beta * (r2 + k_of_x)))
    return ScalarField(spec, u)
