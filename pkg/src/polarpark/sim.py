"""Closed-loop simulation of the parking controllers.

Trajectories can be integrated in either frame:

    polar      integrates (rho, delta, gamma) with the cancellation
               delta' = (k1/2)*sin(2*gamma) already applied; angles evolve
               unwrapped on the real line.
    cartesian  integrates the raw kinematics (x, y, theta) and computes
               the feedback from the wrapped polar image of the pose, the
               way an implementation on a vehicle would.

Both frames describe the same flow while the trajectory stays inside the
principal angle range, which is how the frame-equivalence checks are run.

Integrators: a fixed-step classic Runge-Kutta scheme for bit-reproducible
baselines, and an adaptive Dormand-Prince 5(4) pair with PI step control
for accuracy.  Results are sampled on the uniform grid k*dt in both cases.
The adaptive integrator reports a boundary stop when step control pushes
the step size below h_min, which happens when the state runs into an
excluded set (for example a barrier line approached too closely to
resolve in double precision).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .controllers import ControlInput, ControllerSpec, control, omega_tilde
from .geometry import (
    CartesianState,
    DomainError,
    PolarState,
    cart_to_polar,
    polar_to_cart,
    wrap_angle,
)
from .lyapunov import CompositeLyapunovFn

__all__ = [
    "Frame",
    "IntegratorKind",
    "SimStatus",
    "SimConfig",
    "Trajectory",
    "rhs_polar",
    "rhs_cartesian",
    "simulate",
    "simulate_unsteered",
]


class Frame(Enum):
    POLAR = "polar"
    CARTESIAN = "cartesian"


class IntegratorKind(Enum):
    RK4_FIXED = "rk4"
    RK45_ADAPTIVE = "rk45"


class SimStatus(Enum):
    CAPTURED = "captured"
    HORIZON_REACHED = "horizon_reached"
    BOUNDARY_STOP = "boundary_stop"


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    dt is the output sampling interval; with the fixed-step integrator it
    is also the step size.  capture_radius <= 0 disables capture
    detection.
    """

    dt: float = 0.05
    t_final: float = 60.0
    capture_radius: float = 1e-3
    frame: Frame = Frame.POLAR
    integrator: IntegratorKind = IntegratorKind.RK45_ADAPTIVE
    rtol: float = 1e-10
    atol: float = 1e-10
    h_min: float = 1e-9

    def __post_init__(self) -> None:
        if not (0.0 < self.dt <= self.t_final):
            raise ValueError(f"need 0 < dt <= t_final, got dt={self.dt}, t_final={self.t_final}")
        for name in ("rtol", "atol", "h_min"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Trajectory:
    """Sampled closed-loop trajectory, stored column-wise.

    All arrays share the time grid t.  The Cartesian columns are always
    populated: integrated directly in the Cartesian frame, reconstructed
    from the polar state otherwise.  lyapunov holds the attached composite
    Lyapunov value and is NaN when none was attached.
    """

    t: np.ndarray
    rho: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    omega_tilde: np.ndarray
    lyapunov: np.ndarray
    status: SimStatus
    frame: Frame
    capture_time: float | None = None
    note: str = ""
    _columns = ("rho", "delta", "gamma", "x", "y", "theta", "v", "omega", "omega_tilde", "lyapunov")

    def __post_init__(self) -> None:
        n = len(self.t)
        for name in self._columns:
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} length mismatch")
        if n > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def times(self) -> np.ndarray:
        return self.t

    @property
    def states(self) -> list[PolarState]:
        return [self.state(i) for i in range(len(self.t))]

    @property
    def inputs(self) -> list[ControlInput]:
        return [
            ControlInput(float(v), float(w), float(wt))
            for v, w, wt in zip(self.v, self.omega, self.omega_tilde)
        ]

    def state(self, i: int) -> PolarState:
        return PolarState(float(self.rho[i]), float(self.delta[i]), float(self.gamma[i]))

    def final_state(self) -> PolarState:
        return self.state(len(self.t) - 1)

    def to_csv(self, path) -> None:
        """Write the trajectory with the fixed header t,x,y,theta,rho,delta,gamma,v,omega,V.

        Values are written with shortest round-trip formatting, so the
        file is byte-stable for identical inputs.
        """
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,x,y,theta,rho,delta,gamma,v,omega,V\n")
            for i in range(len(self.t)):
                row = (
                    self.t[i], self.x[i], self.y[i], self.theta[i],
                    self.rho[i], self.delta[i], self.gamma[i],
                    self.v[i], self.omega[i], self.lyapunov[i],
                )
                fh.write(",".join(repr(float(value)) for value in row) + "\n")


def rhs_polar(spec: ControllerSpec, state: PolarState) -> tuple[float, float, float]:
    """Closed-loop right-hand side in polar coordinates.

    Returns (rho', delta', gamma') = (-k1*rho*cos(gamma)^2,
    (k1/2)*sin(2*gamma), -omega_tilde).  Regular as rho -> 0: the angular
    rates do not involve rho.
    """
    k1 = spec.gains.k1
    cos_g = math.cos(state.gamma)
    return (
        -k1 * state.rho * cos_g * cos_g,
        0.5 * k1 * math.sin(2.0 * state.gamma),
        -omega_tilde(spec, state.delta, state.gamma),
    )


def rhs_cartesian(spec: ControllerSpec, state: CartesianState) -> tuple[float, float, float]:
    """Closed-loop right-hand side in Cartesian coordinates.

    The feedback is computed from the wrapped polar image of the pose.

    Raises:
        DomainError: At the origin, or when the wrapped image leaves the
            controller's space.
    """
    polar = cart_to_polar(state)
    inp = control(spec, polar)
    return (
        inp.v * math.cos(state.theta),
        inp.v * math.sin(state.theta),
        inp.omega,
    )


# Dormand-Prince 5(4) tableau.
_C = (0.2, 0.3, 0.8, 8.0 / 9.0)
_A21 = 0.2
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0,
)


class _BoundaryHit(Exception):
    """Internal: adaptive stepping could not continue."""


def _integrate_adaptive(f, y0, cfg: SimConfig, record, n_samples: int) -> str:
    """Advance y' = f(t, y) and call record(i, t, y) at t = i*dt.

    Returns "done", or raises _BoundaryHit when the step size collapses
    below cfg.h_min (stage evaluations that leave the domain count as
    failed steps and shrink the step first).
    """
    t = 0.0
    y = y0
    dt = cfg.dt
    rtol, atol = cfg.rtol, cfg.atol
    k1 = f(t, y)
    h = min(dt, 1e-3)
    for i in range(1, n_samples + 1):
        t_target = i * dt
        while t < t_target - 1e-12:
            h = min(h, t_target - t)
            if h < cfg.h_min:
                raise _BoundaryHit(f"step size {h:.3e} below h_min at t={t:.6g}")
            y1, y2, y3 = y
            f1 = k1
            try:
                f2 = f(t + _C[0] * h, (
                    y1 + h * _A21 * f1[0], y2 + h * _A21 * f1[1], y3 + h * _A21 * f1[2]))
                f3 = f(t + _C[1] * h, (
                    y1 + h * (_A31 * f1[0] + _A32 * f2[0]),
                    y2 + h * (_A31 * f1[1] + _A32 * f2[1]),
                    y3 + h * (_A31 * f1[2] + _A32 * f2[2])))
                f4 = f(t + _C[2] * h, (
                    y1 + h * (_A41 * f1[0] + _A42 * f2[0] + _A43 * f3[0]),
                    y2 + h * (_A41 * f1[1] + _A42 * f2[1] + _A43 * f3[1]),
                    y3 + h * (_A41 * f1[2] + _A42 * f2[2] + _A43 * f3[2])))
                f5 = f(t + _C[3] * h, (
                    y1 + h * (_A51 * f1[0] + _A52 * f2[0] + _A53 * f3[0] + _A54 * f4[0]),
                    y2 + h * (_A51 * f1[1] + _A52 * f2[1] + _A53 * f3[1] + _A54 * f4[1]),
                    y3 + h * (_A51 * f1[2] + _A52 * f2[2] + _A53 * f3[2] + _A54 * f4[2])))
                f6 = f(t + h, (
                    y1 + h * (_A61 * f1[0] + _A62 * f2[0] + _A63 * f3[0] + _A64 * f4[0] + _A65 * f5[0]),
                    y2 + h * (_A61 * f1[1] + _A62 * f2[1] + _A63 * f3[1] + _A64 * f4[1] + _A65 * f5[1]),
                    y3 + h * (_A61 * f1[2] + _A62 * f2[2] + _A63 * f3[2] + _A64 * f4[2] + _A65 * f5[2])))
                z1 = y1 + h * (_B1 * f1[0] + _B3 * f3[0] + _B4 * f4[0] + _B5 * f5[0] + _B6 * f6[0])
                z2 = y2 + h * (_B1 * f1[1] + _B3 * f3[1] + _B4 * f4[1] + _B5 * f5[1] + _B6 * f6[1])
                z3 = y3 + h * (_B1 * f1[2] + _B3 * f3[2] + _B4 * f4[2] + _B5 * f5[2] + _B6 * f6[2])
                f7 = f(t + h, (z1, z2, z3))
            except DomainError:
                # A stage left the domain; retry with a smaller step until
                # h_min decides this is a genuine boundary approach.
                h *= 0.25
                continue
            e1 = h * (_E1 * f1[0] + _E3 * f3[0] + _E4 * f4[0] + _E5 * f5[0] + _E6 * f6[0] + _E7 * f7[0])
            e2 = h * (_E1 * f1[1] + _E3 * f3[1] + _E4 * f4[1] + _E5 * f5[1] + _E6 * f6[1] + _E7 * f7[1])
            e3 = h * (_E1 * f1[2] + _E3 * f3[2] + _E4 * f4[2] + _E5 * f5[2] + _E6 * f6[2] + _E7 * f7[2])
            s1 = atol + rtol * max(abs(y1), abs(z1))
            s2 = atol + rtol * max(abs(y2), abs(z2))
            s3 = atol + rtol * max(abs(y3), abs(z3))
            err = math.sqrt(((e1 / s1) ** 2 + (e2 / s2) ** 2 + (e3 / s3) ** 2) / 3.0)
            if err <= 1.0:
                t += h
                y = (z1, z2, z3)
                k1 = f7
                h *= 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err**-0.2))
            else:
                h *= max(0.2, 0.9 * err**-0.2)
        if record(i, t_target, y):
            return "stopped"
    return "done"


def _integrate_fixed(f, y0, cfg: SimConfig, record, n_samples: int) -> str:
    t = 0.0
    y = y0
    h = cfg.dt
    for i in range(1, n_samples + 1):
        y1, y2, y3 = y
        f1 = f(t, y)
        f2 = f(t + h / 2, (y1 + h / 2 * f1[0], y2 + h / 2 * f1[1], y3 + h / 2 * f1[2]))
        f3 = f(t + h / 2, (y1 + h / 2 * f2[0], y2 + h / 2 * f2[1], y3 + h / 2 * f2[2]))
        f4 = f(t + h, (y1 + h * f3[0], y2 + h * f3[1], y3 + h * f3[2]))
        y = (
            y1 + h / 6 * (f1[0] + 2 * f2[0] + 2 * f3[0] + f4[0]),
            y2 + h / 6 * (f1[1] + 2 * f2[1] + 2 * f3[1] + f4[1]),
            y3 + h / 6 * (f1[2] + 2 * f2[2] + 2 * f3[2] + f4[2]),
        )
        t = i * h
        if record(i, t, y):
            return "stopped"
    return "done"


def _run(f, y0, cfg: SimConfig, captured) -> tuple[np.ndarray, np.ndarray, SimStatus, float | None, str]:
    n_samples = int(round(cfg.t_final / cfg.dt))
    times = np.empty(n_samples + 1)
    ys = np.empty((n_samples + 1, 3))
    times[0] = 0.0
    ys[0] = y0
    count = [1]
    capture_time = [None]

    def record(i, t, y):
        times[i] = t
        ys[i] = y
        count[0] = i + 1
        if captured is not None and captured(y):
            capture_time[0] = t
            return True
        return False

    note = ""
    try:
        outcome = (_integrate_adaptive if cfg.integrator is IntegratorKind.RK45_ADAPTIVE
                   else _integrate_fixed)(f, y0, cfg, record, n_samples)
    except _BoundaryHit as stop:
        outcome = "boundary"
        note = str(stop)
    n = count[0]
    if outcome == "boundary":
        status = SimStatus.BOUNDARY_STOP
    elif capture_time[0] is not None:
        status = SimStatus.CAPTURED
    else:
        status = SimStatus.HORIZON_REACHED
    return times[:n], ys[:n], status, capture_time[0], note


def _capture_test(cfg: SimConfig, to_polar):
    if cfg.capture_radius <= 0.0:
        return None
    radius = cfg.capture_radius

    def captured(y):
        rho, delta, gamma = to_polar(y)
        return rho < radius and abs(delta) < radius and abs(gamma) < radius

    return captured


def _reconstruct_cartesian(ys: np.ndarray, delta0: float):
    x, y, theta = ys[:, 0], ys[:, 1], ys[:, 2]
    rho = np.hypot(x, y)
    raw = np.arctan2(y, x) + math.pi
    delta = np.unwrap(raw)
    delta += 2.0 * math.pi * round((delta0 - delta[0]) / (2.0 * math.pi))
    gamma = delta - theta
    return rho, delta, gamma


def simulate(
    spec: ControllerSpec,
    x0: PolarState | CartesianState,
    cfg: SimConfig = SimConfig(),
    lyapunov: CompositeLyapunovFn | None = None,
) -> Trajectory:
    """Integrate the closed loop from an initial state.

    Args:
        spec: Controller to run.
        x0: Initial state; converted to the frame named by cfg.frame.
        cfg: Simulation settings.
        lyapunov: Optional composite Lyapunov function evaluated along the
            trajectory (gains should match the controller's).

    Returns:
        Trajectory sampled at multiples of cfg.dt; ends early with status
        CAPTURED or BOUNDARY_STOP when those events occur.

    Raises:
        DomainError: If x0 lies outside the controller's open space.
    """
    polar0 = x0 if isinstance(x0, PolarState) else cart_to_polar(x0)
    if not spec.space.contains(polar0):
        raise DomainError(
            f"initial state outside the open space {spec.space.value} of {spec.kind.value}"
        )

    if cfg.frame is Frame.POLAR:
        def f(t, y):
            rho, delta, gamma = y
            k1 = spec.gains.k1
            cos_g = math.cos(gamma)
            return (
                -k1 * rho * cos_g * cos_g,
                0.5 * k1 * math.sin(2.0 * gamma),
                -omega_tilde(spec, delta, gamma),
            )

        y0 = (polar0.rho, polar0.delta, polar0.gamma)
        times, ys, status, capture_time, note = _run(f, y0, cfg, _capture_test(cfg, lambda y: y))
        rho, delta, gamma = ys[:, 0], ys[:, 1], ys[:, 2]
        theta = delta - gamma
        x = -rho * np.cos(delta)
        y_pos = -rho * np.sin(delta)
    else:
        cart0 = x0 if isinstance(x0, CartesianState) else polar_to_cart(x0)

        def f(t, y):
            return rhs_cartesian(spec, CartesianState(y[0], y[1], y[2]))

        def to_polar(y):
            rho = math.hypot(y[0], y[1])
            delta = wrap_angle(math.atan2(y[1], y[0]) + math.pi)
            return rho, delta, wrap_angle(delta - y[2])

        y0 = (cart0.x, cart0.y, cart0.theta)
        times, ys, status, capture_time, note = _run(f, y0, cfg, _capture_test(cfg, to_polar))
        x, y_pos, theta = ys[:, 0], ys[:, 1], ys[:, 2]
        rho, delta, gamma = _reconstruct_cartesian(ys, polar0.delta)

    n = len(times)
    v = np.empty(n)
    omega = np.empty(n)
    tilde = np.empty(n)
    values = np.full(n, np.nan)
    for i in range(n):
        if cfg.frame is Frame.POLAR:
            state_i = PolarState(max(rho[i], 0.0), delta[i], gamma[i])
        else:
            # Feedback as computed during integration: wrapped image.
            state_i = cart_to_polar(CartesianState(x[i], y_pos[i], theta[i]))
        inp = control(spec, state_i)
        v[i], omega[i], tilde[i] = inp.v, inp.omega, inp.omega_tilde
        if lyapunov is not None:
            values[i] = lyapunov.value(rho[i], delta[i], gamma[i])

    return Trajectory(
        t=times, rho=rho, delta=delta, gamma=gamma, x=x, y=y_pos, theta=theta,
        v=v, omega=omega, omega_tilde=tilde, lyapunov=values,
        status=status, frame=cfg.frame, capture_time=capture_time, note=note,
    )


def simulate_unsteered(k1: float, x0: PolarState, cfg: SimConfig = SimConfig()) -> Trajectory:
    """Integrate with the turn rate forced to zero (steering off).

    Only the forward-velocity feedback v = k1*rho*cos(gamma) acts, so
    theta is frozen and both angles drift at the same rate:
    delta' = gamma' = (k1/2)*sin(2*gamma).  Useful for studying the
    uncontrolled line-of-sight behavior.
    """
    if k1 <= 0.0:
        raise ValueError("k1 must be positive")

    def f(t, y):
        rho, delta, gamma = y
        cos_g = math.cos(gamma)
        rate = 0.5 * k1 * math.sin(2.0 * gamma)
        return (-k1 * rho * cos_g * cos_g, rate, rate)

    y0 = (x0.rho, x0.delta, x0.gamma)
    times, ys, status, capture_time, note = _run(f, y0, cfg, _capture_test(cfg, lambda y: y))
    rho, delta, gamma = ys[:, 0], ys[:, 1], ys[:, 2]
    theta = delta - gamma
    v = k1 * rho * np.cos(gamma)
    omega = np.zeros_like(v)
    # omega = feedforward + omega_tilde = 0 resolves the split as below.
    tilde = -0.5 * k1 * np.sin(2.0 * gamma)
    return Trajectory(
        t=times, rho=rho, delta=delta, gamma=gamma,
        x=-rho * np.cos(delta), y=-rho * np.sin(delta), theta=theta,
        v=v, omega=omega, omega_tilde=tilde, lyapunov=np.full(len(times), np.nan),
        status=status, frame=Frame.POLAR, capture_time=capture_time, note=note,
    )
