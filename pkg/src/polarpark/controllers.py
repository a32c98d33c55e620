"""Steering laws that park a unicycle at the origin of the polar chart.

All four controllers share the same forward-velocity feedback

    v = k1 * rho * cos(gamma),

which makes the distance satisfy rho' = -k1 * rho * cos(gamma)^2 and,
after the turn-rate split omega = (k1/2) * sin(2*gamma) + omega_tilde,
decouples the angular subsystem into

    delta' = (k1/2) * sin(2*gamma),      gamma' = -omega_tilde.

The controllers differ only in the steering correction omega_tilde:

    GLOBA   backstepping on the raw angle delta; defined on the whole
            angular plane.
    BARFLI  backstepping on the shaped angle 2*tan(delta/2); the shaping
            acts as a barrier that keeps |delta| < pi, so the vehicle
            never crosses the line directly in front of the target.
    BOLSA   passivity-style law with bounded steering; keeps |gamma| < pi
            (the vehicle never turns its back on the target).
    BAGAL   combines the delta barrier with the gamma barrier.

BOLSA and BAGAL need the gain coupling k1*k3 >= k2^2 for their decrease
certificates; construction rejects gains that violate it unless the
caller explicitly opts out.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .geometry import DomainError, PolarState, StateSpace

__all__ = [
    "ControllerKind",
    "Gains",
    "ControllerSpec",
    "ControlInput",
    "BacksteppingAux",
    "forward_velocity",
    "delta_shaping",
    "psi",
    "backstepping_aux",
    "omega_tilde",
    "control",
]


class ControllerKind(Enum):
    """The four steering laws."""

    GLOBA = "globa"
    BARFLI = "barfli"
    BOLSA = "bolsa"
    BAGAL = "bagal"

    @property
    def space(self) -> StateSpace:
        """Open state space on which the controller is defined."""
        return _SPACES[self]

    @property
    def uses_backstepping(self) -> bool:
        """True for the two backstepping designs (GLOBA, BARFLI)."""
        return self in (ControllerKind.GLOBA, ControllerKind.BARFLI)

    @property
    def needs_gain_coupling(self) -> bool:
        """True when the decrease certificate assumes k1*k3 >= k2^2."""
        return self in (ControllerKind.BOLSA, ControllerKind.BAGAL)


_SPACES = {
    ControllerKind.GLOBA: StateSpace.S,
    ControllerKind.BARFLI: StateSpace.S1,
    ControllerKind.BOLSA: StateSpace.S2,
    ControllerKind.BAGAL: StateSpace.S3,
}


@dataclass(frozen=True)
class Gains:
    """Positive feedback gains.

    k1 scales the forward velocity, k2 and k3 the steering feedback, and
    k4 the backstepping damping (unused by BOLSA and BAGAL).
    """

    k1: float
    k2: float
    k3: float
    k4: float = 1.0

    def __post_init__(self) -> None:
        for name in ("k1", "k2", "k3", "k4"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"gain {name}={value} must be finite and positive")

    @property
    def coupling_margin(self) -> float:
        """k1*k3 - k2^2; nonnegative when the coupling condition holds."""
        return self.k1 * self.k3 - self.k2**2

    @property
    def q(self) -> float:
        """Gain ratio sqrt(k1/k3) used by the angular certificates."""
        return math.sqrt(self.k1 / self.k3)


@dataclass(frozen=True)
class ControllerSpec:
    """A controller kind with its gains.

    For BOLSA and BAGAL the coupling k1*k3 >= k2^2 is enforced at
    construction.  Pass allow_unproven_gains=True to run such a controller
    with gains outside the certified region (the reference experiments do
    this; convergence is then checked empirically, not guaranteed).
    """

    kind: ControllerKind
    gains: Gains
    allow_unproven_gains: bool = False

    def __post_init__(self) -> None:
        if (
            self.kind.needs_gain_coupling
            and not self.allow_unproven_gains
            and self.gains.coupling_margin < 0.0
        ):
            raise ValueError(
                f"{self.kind.value} requires k1*k3 >= k2^2 "
                f"(margin {self.gains.coupling_margin:.6g}); "
                "pass allow_unproven_gains=True to override"
            )

    @property
    def space(self) -> StateSpace:
        return self.kind.space


@dataclass(frozen=True)
class ControlInput:
    """Velocity commands produced by a controller."""

    v: float
    """Forward velocity [m/s]."""

    omega: float
    """Turn rate [rad/s], omega = (k1/2)*sin(2*gamma) + omega_tilde."""

    omega_tilde: float
    """Steering correction acting on the line-of-sight angle."""


@dataclass(frozen=True)
class BacksteppingAux:
    """Intermediate quantities of the backstepping designs."""

    Delta: float
    """Shaped angle: delta itself (GLOBA) or 2*tan(delta/2) (BARFLI)."""

    dDelta_ddelta: float
    """Derivative of the shaping with respect to delta."""

    z: float
    """Backstepping variable z = gamma + (1/2)*arctan(2*k2*Delta)."""

    psi: float
    """Interconnection factor psi(z, gamma); equals cos(2*gamma) at z=0."""


def forward_velocity(state: PolarState, gains: Gains) -> float:
    """Forward velocity feedback v = k1 * rho * cos(gamma).

    Well defined everywhere, including rho = 0.  Negative when the target
    lies behind the vehicle (|gamma| > pi/2), in which case it backs up.
    """
    return gains.k1 * state.rho * math.cos(state.gamma)


def delta_shaping(kind: ControllerKind, delta: float) -> tuple[float, float]:
    """Shaped angle Delta(delta) and its derivative for backstepping.

    Args:
        kind: GLOBA (identity shaping) or BARFLI (tangent-barrier shaping).
        delta: Unwrapped angle; BARFLI requires |delta| < pi.

    Returns:
        (Delta, dDelta/ddelta).

    Raises:
        DomainError: For BARFLI at |delta| >= pi.
        ValueError: For kinds without a backstepping shaping.
    """
    if kind is ControllerKind.GLOBA:
        return delta, 1.0
    if kind is ControllerKind.BARFLI:
        if abs(delta) >= math.pi:
            raise DomainError("steering undefined at |delta| >= pi")
        half_tan = math.tan(delta / 2.0)
        return 2.0 * half_tan, 1.0 + half_tan * half_tan
    raise ValueError(f"no delta shaping for controller kind {kind.value}")


def psi(z: float, gamma: float, k2: float, Delta: float) -> float:
    """Interconnection factor of the backstepping laws.

    Defined as (sin(2z - 2*gamma) + sin(2*gamma)) / (2z), where gamma ties
    to z through 2z - 2*gamma = arctan(2*k2*Delta).  Evaluation uses the
    equivalent form

        [sin(2z)/(2z) + 2*k2*Delta * (1 - cos(2z))/(2z)] / sqrt(1 + 4*k2^2*Delta^2)

    which only needs z, k2, Delta.  The factor (1 - cos(2z))/(2z) is
    computed as sin(z)^2 / z, which is free of cancellation; a short series
    replaces both ratios for |z| below 1e-8, where the truncation error is
    under double-precision resolution.  At z = 0 the value is
    1/sqrt(1 + 4*k2^2*Delta^2) = cos(2*gamma) for consistent arguments, and
    psi(0, 0) = 1 is the global maximum.
    """
    del gamma  # enters only through the identity above
    if abs(z) < 1e-8:
        sin_ratio = 1.0 - (2.0 / 3.0) * z * z
        versine_ratio = z * (1.0 - z * z / 3.0)
    else:
        sin_ratio = math.sin(2.0 * z) / (2.0 * z)
        sin_z = math.sin(z)
        versine_ratio = sin_z * sin_z / z
    return (sin_ratio + 2.0 * k2 * Delta * versine_ratio) / math.sqrt(
        1.0 + 4.0 * k2 * k2 * Delta * Delta
    )


def backstepping_aux(kind: ControllerKind, gains: Gains, delta: float, gamma: float) -> BacksteppingAux:
    """Assemble the backstepping quantities at an angular state."""
    Delta, dDelta = delta_shaping(kind, delta)
    z = gamma + 0.5 * math.atan(2.0 * gains.k2 * Delta)
    return BacksteppingAux(Delta, dDelta, z, psi(z, gamma, gains.k2, Delta))


def _omega_tilde_backstepping(kind: ControllerKind, gains: Gains, delta: float, gamma: float) -> float:
    # Same quantities as backstepping_aux, kept inline: this sits on the
    # simulator's hot path.
    Delta, dDelta = delta_shaping(kind, delta)
    k1, k2, k3, k4 = gains.k1, gains.k2, gains.k3, gains.k4
    z = gamma + 0.5 * math.atan(2.0 * k2 * Delta)
    gain_sq = 1.0 + 4.0 * k2 * k2 * Delta * Delta
    return k4 * z + dDelta * (
        k1 * k2 * math.sin(2.0 * gamma) / (2.0 * gain_sq) + k3 * psi(z, gamma, k2, Delta) * Delta
    )


def _bounded_gamma_factor(gamma: float) -> float:
    # cos(gamma) / (1 + tan(gamma/2)^2)^2 written via the half-angle
    # identity 1/(1 + tan^2) = (1 + cos)/2, so it extends smoothly through
    # |gamma| = pi where it vanishes.
    cos_g = math.cos(gamma)
    return cos_g * (1.0 + cos_g) ** 2 / 4.0


def omega_tilde(spec: ControllerSpec, delta: float, gamma: float) -> float:
    """Steering correction of a controller at an angular state.

    Args:
        spec: Controller kind and gains.
        delta: Unwrapped angle; must satisfy |delta| < pi for the kinds
            with a delta barrier (BARFLI, BAGAL).
        gamma: Unwrapped line-of-sight angle.  BOLSA and BAGAL extend
            smoothly through |gamma| = pi, where their steering reduces to
            k2*sin(gamma).

    Returns:
        omega_tilde such that gamma' = -omega_tilde in closed loop.

    Raises:
        DomainError: When the state is outside the controller's space in
            a direction the formula cannot be extended through.
    """
    gains = spec.gains
    if spec.kind.uses_backstepping:
        return _omega_tilde_backstepping(spec.kind, gains, delta, gamma)
    if spec.kind is ControllerKind.BOLSA:
        return gains.k2 * math.sin(gamma) + gains.k3 * _bounded_gamma_factor(gamma) * delta
    # BAGAL
    if abs(delta) >= math.pi:
        raise DomainError("steering undefined at |delta| >= pi")
    half_tan = math.tan(delta / 2.0)
    steep_delta = (1.0 + half_tan * half_tan) * half_tan
    return gains.k2 * math.sin(gamma) + 2.0 * gains.k3 * _bounded_gamma_factor(gamma) * steep_delta


def control(spec: ControllerSpec, state: PolarState) -> ControlInput:
    """Full control input (v, omega) at a polar state.

    The turn rate combines the feedforward that cancels the line-of-sight
    drift with the steering correction:

        omega = (k1/2) * sin(2*gamma) + omega_tilde.
    """
    tilde = omega_tilde(spec, state.delta, state.gamma)
    omega = 0.5 * spec.gains.k1 * math.sin(2.0 * state.gamma) + tilde
    return ControlInput(forward_velocity(state, spec.gains), omega, tilde)
