"""Lyapunov certificates for the parking controllers.

Each controller has an angular storage function V(delta, gamma) that is
zero only at the angular origin and decreases along the closed-loop flow

    delta' = (k1/2) * sin(2*gamma),      gamma' = -omega_tilde.

Barriered controllers have storage functions that blow up at the excluded
lines, which is what makes their sublevel sets invariant.

A compositor then combines rho^2 with the angular value into a Lyapunov
function for the full state, V(rho, delta, gamma) = C(rho^2, V_dg) or
C(V_dg, rho^2).  Any C that vanishes only at (0, 0), grows unboundedly,
and has strictly positive partial derivatives off the origin works; the
built-in choices are the plain sum, a log-compressed sum, and an
exponential product.  Custom compositors are screened numerically before
use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

from .controllers import (
    ControllerKind,
    ControllerSpec,
    Gains,
    backstepping_aux,
    omega_tilde,
)
from .geometry import DomainError

__all__ = [
    "LyapunovFn",
    "CompositorForm",
    "ArgumentOrder",
    "Compositor",
    "CompositeLyapunovFn",
    "composite",
    "v_delta_gamma",
    "v_dot_analytic",
    "gradient",
    "bolsa_decay_bound",
]


def _check_angles(kind: ControllerKind, delta: float, gamma: float) -> None:
    space = kind.space
    if space.delta_bounded and abs(delta) >= math.pi:
        raise DomainError("barrier blow-up at |delta| >= pi")
    if space.gamma_bounded and abs(gamma) >= math.pi:
        raise DomainError("barrier blow-up at |gamma| >= pi")


@dataclass(frozen=True)
class LyapunovFn:
    """Angular storage function matched to a controller kind."""

    kind: ControllerKind
    gains: Gains

    @classmethod
    def for_controller(cls, spec: ControllerSpec) -> "LyapunovFn":
        return cls(spec.kind, spec.gains)

    @property
    def space(self):
        return self.kind.space

    def _spec(self) -> ControllerSpec:
        # The derivative formulas are meaningful at any positive gains;
        # the coupling condition only affects the decrease certificate.
        return ControllerSpec(self.kind, self.gains, allow_unproven_gains=True)

    def value(self, delta: float, gamma: float) -> float:
        """V(delta, gamma) >= 0, zero only at the angular origin.

        Raises:
            DomainError: On or outside a barriered line, where the
                storage function is infinite.
        """
        _check_angles(self.kind, delta, gamma)
        g = self.gains
        if self.kind.uses_backstepping:
            aux = backstepping_aux(self.kind, g, delta, gamma)
            return aux.Delta**2 + (g.k1 / g.k3) * aux.z**2
        if self.kind is ControllerKind.BOLSA:
            q = g.q
            t = math.tan(gamma / 2.0)
            u = delta * delta + 4.0 * q * q * t * t
            shifted = delta + 2.0 * q * t
            return g.k3 * (1.0 + (2.0 * q * q + u) / (2.0 * q * g.k2)) * u + shifted * shifted
        # BAGAL
        q = g.q
        d = math.tan(delta / 2.0)
        t = math.tan(gamma / 2.0)
        u = d * d + q * q * t * t
        amp = max(g.k1 * q, 2.0 * math.sqrt(g.k1 * g.k2)) / (3.0 * g.k2 * q * q)
        shifted = d + q * t
        return amp * ((1.0 + u) ** 3 - 1.0) + shifted * shifted

    def grad(self, delta: float, gamma: float) -> tuple[float, float]:
        """Analytic gradient (dV/ddelta, dV/dgamma)."""
        _check_angles(self.kind, delta, gamma)
        g = self.gains
        if self.kind.uses_backstepping:
            aux = backstepping_aux(self.kind, g, delta, gamma)
            q_sq = g.k1 / g.k3
            dz_ddelta = g.k2 * aux.dDelta_ddelta / (1.0 + 4.0 * g.k2**2 * aux.Delta**2)
            d_delta = 2.0 * aux.Delta * aux.dDelta_ddelta + 2.0 * q_sq * aux.z * dz_ddelta
            d_gamma = 2.0 * q_sq * aux.z
            return d_delta, d_gamma
        if self.kind is ControllerKind.BOLSA:
            q = g.q
            t = math.tan(gamma / 2.0)
            sec_sq = 1.0 + t * t
            c1 = g.k3 * (1.0 + q / g.k2)
            c2 = g.k3 / (2.0 * q * g.k2)
            u = delta * delta + 4.0 * q * q * t * t
            shifted = delta + 2.0 * q * t
            outer = c1 + 2.0 * c2 * u
            d_delta = outer * 2.0 * delta + 2.0 * shifted
            d_gamma = outer * 4.0 * q * q * t * sec_sq + 2.0 * shifted * q * sec_sq
            return d_delta, d_gamma
        q = g.q
        d = math.tan(delta / 2.0)
        t = math.tan(gamma / 2.0)
        u = d * d + q * q * t * t
        amp = max(g.k1 * q, 2.0 * math.sqrt(g.k1 * g.k2)) / (3.0 * g.k2 * q * q)
        shifted = d + q * t
        outer = 3.0 * amp * (1.0 + u) ** 2
        d_delta = (outer * 2.0 * d + 2.0 * shifted) * (1.0 + d * d) / 2.0
        d_gamma = (outer * 2.0 * q * q * t + 2.0 * shifted * q) * (1.0 + t * t) / 2.0
        return d_delta, d_gamma

    def vdot(self, delta: float, gamma: float) -> float:
        """Exact derivative of V along the matched closed loop.

        For the backstepping kinds this is the closed-form expression

            -2*k1*k2*Delta^2/sqrt(1 + 4*k2^2*Delta^2) * dDelta/ddelta
            - 2*k4*(k1/k3)*z^2,

        which the cross-term cancellation of the design makes equal to the
        chain-rule derivative.  For BOLSA and BAGAL it is the chain rule
        with analytic partials; their published decrease statements are
        inequalities, checked separately (see bolsa_decay_bound and the
        verification module).
        """
        g = self.gains
        if self.kind.uses_backstepping:
            _check_angles(self.kind, delta, gamma)
            aux = backstepping_aux(self.kind, g, delta, gamma)
            root = math.sqrt(1.0 + 4.0 * g.k2**2 * aux.Delta**2)
            return (
                -2.0 * g.k1 * g.k2 * aux.Delta**2 / root * aux.dDelta_ddelta
                - 2.0 * g.k4 * (g.k1 / g.k3) * aux.z**2
            )
        d_delta, d_gamma = self.grad(delta, gamma)
        delta_rate = 0.5 * g.k1 * math.sin(2.0 * gamma)
        gamma_rate = -omega_tilde(self._spec(), delta, gamma)
        return d_delta * delta_rate + d_gamma * gamma_rate


def bolsa_decay_bound(
    gains: Gains, delta: float, gamma: float, shift_weight: float = 1.0
) -> float:
    """Certified upper bound on the BOLSA storage derivative.

    Returns -2*k1*k2*V0 - (3/2)*k2*(delta + w*q*tan(gamma/2))^2 - 2*k1*q*V0^2
    with V0 = 4*tan(gamma/2)^2 and w = shift_weight.  The default weight 1
    is the stated certificate; weight 2 matches the combined variable
    delta + 2*q*tan(gamma/2) that appears in the storage function itself,
    and is the variant the grid certification reports alongside it.
    """
    q = gains.q
    t = math.tan(gamma / 2.0)
    v0 = 4.0 * t * t
    penalty = delta + shift_weight * q * t
    return -2.0 * gains.k1 * gains.k2 * v0 - 1.5 * gains.k2 * penalty * penalty - 2.0 * gains.k1 * q * v0 * v0


def _exp_or_inf(x: float) -> float:
    # Barrier storage values can exceed the exp overflow threshold (~709);
    # saturating to inf keeps downstream comparisons meaningful.
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


class CompositorForm(Enum):
    """Built-in ways to merge rho^2 with the angular storage value."""

    SUM = "sum"
    LOG_SUM = "log_sum"
    EXP_PRODUCT = "exp_product"
    CUSTOM = "custom"


class ArgumentOrder(Enum):
    """Which quantity feeds the first compositor argument."""

    RHO_FIRST = "rho_first"
    VDG_FIRST = "vdg_first"


@dataclass(frozen=True)
class Compositor:
    """Two-argument merging function C(r, s) with its partial derivatives.

    Built-in forms: SUM C = r + s, LOG_SUM C = ln(1 + r) + s, and
    EXP_PRODUCT C = (1 + r)*exp(s) - 1.  CUSTOM supplies callables for the
    value and both partials; composite() screens them numerically.
    """

    form: CompositorForm
    order: ArgumentOrder = ArgumentOrder.RHO_FIRST
    fn: Callable[[float, float], float] | None = None
    dfn_dr: Callable[[float, float], float] | None = None
    dfn_ds: Callable[[float, float], float] | None = None

    def __post_init__(self) -> None:
        if self.form is CompositorForm.CUSTOM:
            if not (self.fn and self.dfn_dr and self.dfn_ds):
                raise ValueError("custom compositor needs fn, dfn_dr, dfn_ds")
        elif self.fn or self.dfn_dr or self.dfn_ds:
            raise ValueError("callables are only accepted with the CUSTOM form")

    @classmethod
    def sum_form(cls, order: ArgumentOrder = ArgumentOrder.RHO_FIRST) -> "Compositor":
        return cls(CompositorForm.SUM, order)

    @classmethod
    def log_sum(cls, order: ArgumentOrder = ArgumentOrder.RHO_FIRST) -> "Compositor":
        return cls(CompositorForm.LOG_SUM, order)

    @classmethod
    def exp_product(cls, order: ArgumentOrder = ArgumentOrder.RHO_FIRST) -> "Compositor":
        return cls(CompositorForm.EXP_PRODUCT, order)

    @classmethod
    def custom(
        cls,
        fn: Callable[[float, float], float],
        dfn_dr: Callable[[float, float], float],
        dfn_ds: Callable[[float, float], float],
        order: ArgumentOrder = ArgumentOrder.RHO_FIRST,
    ) -> "Compositor":
        return cls(CompositorForm.CUSTOM, order, fn, dfn_dr, dfn_ds)

    def value(self, r: float, s: float) -> float:
        if self.form is CompositorForm.SUM:
            return r + s
        if self.form is CompositorForm.LOG_SUM:
            return math.log1p(r) + s
        if self.form is CompositorForm.EXP_PRODUCT:
            return (1.0 + r) * _exp_or_inf(s) - 1.0
        return self.fn(r, s)

    def partials(self, r: float, s: float) -> tuple[float, float]:
        """(dC/dr, dC/ds)."""
        if self.form is CompositorForm.SUM:
            return 1.0, 1.0
        if self.form is CompositorForm.LOG_SUM:
            return 1.0 / (1.0 + r), 1.0
        if self.form is CompositorForm.EXP_PRODUCT:
            exp_s = _exp_or_inf(s)
            return exp_s, (1.0 + r) * exp_s
        return self.dfn_dr(r, s), self.dfn_ds(r, s)


@dataclass(frozen=True)
class CompositeLyapunovFn:
    """Full-state Lyapunov function built from a compositor."""

    compositor: Compositor
    angular: LyapunovFn

    def _args(self, rho: float, delta: float, gamma: float) -> tuple[float, float]:
        s = self.angular.value(delta, gamma)
        r = rho * rho
        if self.compositor.order is ArgumentOrder.RHO_FIRST:
            return r, s
        return s, r

    def value(self, rho: float, delta: float, gamma: float) -> float:
        return self.compositor.value(*self._args(rho, delta, gamma))

    def gradient(self, rho: float, delta: float, gamma: float) -> tuple[float, float, float]:
        """Analytic gradient (dV/drho, dV/ddelta, dV/dgamma)."""
        first, second = self._args(rho, delta, gamma)
        p_first, p_second = self.compositor.partials(first, second)
        if self.compositor.order is ArgumentOrder.RHO_FIRST:
            p_rho_sq, p_angular = p_first, p_second
        else:
            p_rho_sq, p_angular = p_second, p_first
        dv_ddelta, dv_dgamma = self.angular.grad(delta, gamma)
        return (
            p_rho_sq * 2.0 * rho,
            p_angular * dv_ddelta,
            p_angular * dv_dgamma,
        )

    def vdot(self, rho: float, delta: float, gamma: float) -> float:
        """Exact derivative along the matched closed loop.

        Chain rule on C(rho^2, V_dg): the distance argument contributes
        dC/d(rho^2) * (-2*k1*rho^2*cos(gamma)^2) and the angular argument
        contributes dC/dV_dg * V_dg'.
        """
        first, second = self._args(rho, delta, gamma)
        p_first, p_second = self.compositor.partials(first, second)
        if self.compositor.order is ArgumentOrder.RHO_FIRST:
            p_rho_sq, p_angular = p_first, p_second
        else:
            p_rho_sq, p_angular = p_second, p_first
        k1 = self.angular.gains.k1
        cos_g = math.cos(gamma)
        rho_sq_rate = -2.0 * k1 * rho * rho * cos_g * cos_g
        return p_rho_sq * rho_sq_rate + p_angular * self.angular.vdot(delta, gamma)


_SCREEN_GRID = [0.0] + [10.0 ** e for e in range(-6, 5)]


def composite(comp: Compositor, fn: LyapunovFn) -> CompositeLyapunovFn:
    """Build a full-state Lyapunov function, screening custom compositors.

    Custom compositors are checked numerically on a log-spaced grid
    (r, s in [0, 1e4]) plus a diagonal probe: the value must vanish at the
    origin, be positive elsewhere, have strictly positive partials off the
    origin, and grow along the diagonal.  This is a screen, not a proof.

    Raises:
        ValueError: With the failing condition and a witness point.
    """
    if comp.form is CompositorForm.CUSTOM:
        at_origin = comp.value(0.0, 0.0)
        if abs(at_origin) > 1e-12:
            raise ValueError(f"compositor nonzero at origin: C(0,0) = {at_origin:.3e}")
        for r in _SCREEN_GRID:
            for s in _SCREEN_GRID:
                if r == 0.0 and s == 0.0:
                    continue
                val = comp.value(r, s)
                if not val > 0.0:
                    raise ValueError(
                        f"compositor not positive off origin: C({r:.3e}, {s:.3e}) = {val:.3e}"
                    )
                p_r, p_s = comp.partials(r, s)
                if not (p_r > 0.0 and p_s > 0.0):
                    raise ValueError(
                        f"compositor partials not strictly positive at "
                        f"({r:.3e}, {s:.3e}): ({p_r:.3e}, {p_s:.3e})"
                    )
        diag = [comp.value(t, t) for t in _SCREEN_GRID[1:]]
        if any(b <= a for a, b in zip(diag, diag[1:])):
            raise ValueError("compositor not increasing along the diagonal probe")
    return CompositeLyapunovFn(comp, fn)


def v_delta_gamma(fn: LyapunovFn, delta: float, gamma: float) -> float:
    """Angular storage value; see LyapunovFn.value."""
    return fn.value(delta, gamma)


def v_dot_analytic(fn: LyapunovFn, delta: float, gamma: float) -> float:
    """Exact closed-loop derivative of the angular storage function."""
    return fn.vdot(delta, gamma)


def gradient(fn: LyapunovFn | CompositeLyapunovFn, state: Sequence[float]) -> tuple[float, ...]:
    """Analytic gradient of an angular or composite Lyapunov function.

    Args:
        fn: LyapunovFn with state (delta, gamma), or CompositeLyapunovFn
            with state (rho, delta, gamma).

    Returns:
        Tuple of partial derivatives matching the state layout.
    """
    if isinstance(fn, LyapunovFn):
        delta, gamma = state
        return fn.grad(delta, gamma)
    rho, delta, gamma = state
    return fn.gradient(rho, delta, gamma)
