"""Closed-loop integration: fields, integrators, capture, and CSV output."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from polarpark import (
    CartesianState,
    CompositeLyapunovFn,
    Compositor,
    ControllerKind,
    ControllerSpec,
    DomainError,
    Frame,
    Gains,
    IntegratorKind,
    LyapunovFn,
    PolarState,
    SimConfig,
    SimStatus,
    Trajectory,
    cart_to_polar,
    polar_to_cart,
    rhs_cartesian,
    rhs_polar,
    simulate,
    simulate_unsteered,
)

UNIT = Gains(1.0, 1.0, 1.0, 1.0)


class TestConfig:
    def test_dt_must_fit_horizon(self):
        with pytest.raises(ValueError, match="dt"):
            SimConfig(dt=2.0, t_final=1.0)
        with pytest.raises(ValueError, match="dt"):
            SimConfig(dt=0.0)
        with pytest.raises(ValueError, match="rtol"):
            SimConfig(rtol=-1e-8)

    def test_trajectory_validation(self):
        t = np.array([0.0, 0.1])
        col = np.zeros(2)
        bad = np.zeros(3)
        with pytest.raises(ValueError, match="length mismatch"):
            Trajectory(t=t, rho=bad, delta=col, gamma=col, x=col, y=col,
                       theta=col, v=col, omega=col, omega_tilde=col,
                       lyapunov=col, status=SimStatus.HORIZON_REACHED,
                       frame=Frame.POLAR)
        with pytest.raises(ValueError, match="strictly increasing"):
            Trajectory(t=np.array([0.0, 0.0]), rho=col, delta=col, gamma=col,
                       x=col, y=col, theta=col, v=col, omega=col,
                       omega_tilde=col, lyapunov=col,
                       status=SimStatus.HORIZON_REACHED, frame=Frame.POLAR)


class TestFields:
    def test_polar_field_formula(self):
        spec = ControllerSpec(ControllerKind.GLOBA, UNIT)
        rho_rate, delta_rate, gamma_rate = rhs_polar(spec, PolarState(2.0, 0.5, -0.3))
        assert rho_rate == pytest.approx(-2.0 * math.cos(-0.3) ** 2, rel=1e-15)
        assert delta_rate == pytest.approx(0.5 * math.sin(-0.6), rel=1e-15)
        assert gamma_rate == pytest.approx(-spec.gains.k1, abs=10.0)  # finite sanity

    def test_cartesian_field_matches_polar_through_jacobian(self):
        # push the Cartesian rates through d(rho,delta,gamma)/d(x,y,theta)
        # and compare with the closed-form polar rates; angles stay in the
        # principal band because the Cartesian field wraps its polar image
        rng = np.random.default_rng(31)
        for kind in ControllerKind:
            spec = ControllerSpec(kind, UNIT)
            d_max = math.pi - 0.05
            g_max = math.pi - 0.05
            for _ in range(2500):
                rho = float(rng.uniform(0.1, 5.0))
                delta = float(rng.uniform(-d_max, d_max))
                gamma = float(rng.uniform(-g_max, g_max))
                polar = PolarState(rho, delta, gamma)
                cart = polar_to_cart(polar)
                x_rate, y_rate, th_rate = rhs_cartesian(spec, cart)
                rho_c = (cart.x * x_rate + cart.y * y_rate) / rho
                delta_c = (cart.x * y_rate - cart.y * x_rate) / (rho * rho)
                gamma_c = delta_c - th_rate
                rho_p, delta_p, gamma_p = rhs_polar(spec, polar)
                for a, b in ((rho_c, rho_p), (delta_c, delta_p), (gamma_c, gamma_p)):
                    assert abs(a - b) <= 1e-9 * max(1.0, abs(a), abs(b))

    def test_field_regular_at_small_rho(self):
        spec = ControllerSpec(ControllerKind.GLOBA, UNIT)
        rates = rhs_polar(spec, PolarState(1e-300, 1.0, 1.0))
        assert all(math.isfinite(r) for r in rates)


class TestIntegrators:
    def test_exact_exponential_decay_on_the_axis(self):
        # (delta, gamma) = (0, 0) is an equilibrium of the angular
        # subsystem, so rho' = -k1*rho exactly along this ray
        spec = ControllerSpec(ControllerKind.GLOBA, Gains(1.5, 1.0, 1.0, 1.0))
        cfg = SimConfig(dt=0.05, t_final=5.0, capture_radius=0.0)
        traj = simulate(spec, PolarState(2.0, 0.0, 0.0), cfg)
        assert traj.status is SimStatus.HORIZON_REACHED
        expected = 2.0 * np.exp(-1.5 * traj.t)
        assert np.max(np.abs(traj.rho - expected) / expected) < 1e-8
        assert np.max(np.abs(traj.delta)) == 0.0
        assert np.max(np.abs(traj.gamma)) == 0.0

    def test_adaptive_matches_scipy(self):
        spec = ControllerSpec(ControllerKind.GLOBA, UNIT)
        cfg = SimConfig(dt=0.1, t_final=10.0, capture_radius=0.0)
        traj = simulate(spec, PolarState(3.0, 2.0, -1.0), cfg)

        def f(t, y):
            return rhs_polar(spec, PolarState(y[0], y[1], y[2]))

        ref = solve_ivp(f, (0.0, 10.0), [3.0, 2.0, -1.0], method="RK45",
                        rtol=1e-12, atol=1e-12, t_eval=traj.t, dense_output=False)
        assert ref.success
        err = np.max(np.abs(np.stack([traj.rho, traj.delta, traj.gamma]) - ref.y))
        assert err < 1e-7

    def test_fixed_step_matches_adaptive(self):
        spec = ControllerSpec(ControllerKind.BARFLI, UNIT)
        x0 = PolarState(1.5, 1.0, -0.5)
        fine = SimConfig(dt=0.01, t_final=4.0, capture_radius=0.0,
                         integrator=IntegratorKind.RK4_FIXED)
        ada = SimConfig(dt=0.01, t_final=4.0, capture_radius=0.0)
        a = simulate(spec, x0, fine)
        b = simulate(spec, x0, ada)
        err = np.max(np.abs(np.stack([a.rho - b.rho, a.delta - b.delta, a.gamma - b.gamma])))
        assert err < 1e-6

    def test_sampling_grid_is_exact(self):
        spec = ControllerSpec(ControllerKind.GLOBA, UNIT)
        cfg = SimConfig(dt=0.05, t_final=2.0, capture_radius=0.0)
        traj = simulate(spec, PolarState(1.0, 0.5, 0.5), cfg)
        assert len(traj) == 41
        expected = np.array([i * cfg.dt for i in range(41)])
        assert np.array_equal(traj.t, expected)

    def test_runs_are_deterministic(self):
        spec = ControllerSpec(ControllerKind.BAGAL, UNIT)
        cfg = SimConfig(dt=0.05, t_final=5.0)
        a = simulate(spec, PolarState(2.0, 1.0, -0.8), cfg)
        b = simulate(spec, PolarState(2.0, 1.0, -0.8), cfg)
        for name in ("t", "rho", "delta", "gamma", "v", "omega"):
            assert np.array_equal(getattr(a, name), getattr(b, name))


class TestTermination:
    def test_capture(self):
        spec = ControllerSpec(ControllerKind.GLOBA, UNIT)
        cfg = SimConfig(dt=0.05, t_final=60.0, capture_radius=1e-3)
        traj = simulate(spec, PolarState(1.0, 0.5, -0.5), cfg)
        assert traj.status is SimStatus.CAPTURED
        assert traj.capture_time is not None
        assert traj.t[-1] == traj.capture_time
        final = traj.final_state()
        assert final.rho < 1e-3
        assert abs(final.delta) < 1e-3 and abs(final.gamma) < 1e-3
        assert len(traj) < int(round(60.0 / 0.05)) + 1

    def test_horizon(self):
        spec = ControllerSpec(ControllerKind.GLOBA, UNIT)
        cfg = SimConfig(dt=0.1, t_final=1.0, capture_radius=0.0)
        traj = simulate(spec, PolarState(5.0, 2.5, 2.5), cfg)
        assert traj.status is SimStatus.HORIZON_REACHED
        assert traj.capture_time is None
        assert traj.t[-1] == 1.0

    def test_boundary_stop_when_started_against_the_wall(self):
        # from delta = pi - 1e-13 any resolvable step crosses the barrier,
        # so the step controller collapses below h_min and reports a stop
        spec = ControllerSpec(ControllerKind.BARFLI, UNIT)
        cfg = SimConfig(dt=0.05, t_final=1.0)
        traj = simulate(spec, PolarState(1.0, math.pi - 1e-13, 0.1), cfg)
        assert traj.status is SimStatus.BOUNDARY_STOP
        assert "h_min" in traj.note
        assert traj.capture_time is None

    def test_initial_state_outside_space_rejected(self):
        spec = ControllerSpec(ControllerKind.BARFLI, UNIT)
        with pytest.raises(DomainError, match="outside the open space"):
            simulate(spec, PolarState(1.0, math.pi, 0.0))
        spec = ControllerSpec(ControllerKind.BOLSA, UNIT)
        with pytest.raises(DomainError, match="outside the open space"):
            simulate(spec, PolarState(1.0, 0.0, -math.pi))


class TestFrames:
    def test_frames_agree_while_away_from_origin(self):
        spec = ControllerSpec(ControllerKind.BOLSA, UNIT)
        x0 = PolarState(2.0, 1.0, -0.5)
        polar_cfg = SimConfig(dt=0.05, t_final=8.0, capture_radius=0.0)
        cart_cfg = SimConfig(dt=0.05, t_final=8.0, capture_radius=0.0,
                             frame=Frame.CARTESIAN)
        a = simulate(spec, x0, polar_cfg)
        b = simulate(spec, x0, cart_cfg)
        mask = a.rho > 1e-4
        err = max(
            np.max(np.abs(a.rho[mask] - b.rho[mask])),
            np.max(np.abs(a.delta[mask] - b.delta[mask])),
            np.max(np.abs(a.gamma[mask] - b.gamma[mask])),
        )
        assert err < 1e-6

    def test_cartesian_ic_accepted_by_polar_run(self):
        spec = ControllerSpec(ControllerKind.GLOBA, UNIT)
        cart = CartesianState(-2.0, 0.0, 0.0)
        traj = simulate(spec, cart, SimConfig(dt=0.05, t_final=1.0))
        assert traj.rho[0] == pytest.approx(2.0)
        assert traj.frame is Frame.POLAR

    def test_cartesian_columns_consistent(self):
        spec = ControllerSpec(ControllerKind.GLOBA, UNIT)
        traj = simulate(spec, PolarState(2.0, 1.0, 0.5),
                        SimConfig(dt=0.1, t_final=3.0, capture_radius=0.0))
        # x = -rho cos(delta), y = -rho sin(delta), theta = delta - gamma
        assert np.allclose(traj.x, -traj.rho * np.cos(traj.delta), atol=1e-12)
        assert np.allclose(traj.y, -traj.rho * np.sin(traj.delta), atol=1e-12)
        assert np.allclose(traj.theta, traj.delta - traj.gamma, atol=1e-12)
        for state, cart in zip(traj.states, zip(traj.x, traj.y, traj.theta)):
            back = cart_to_polar(CartesianState(*map(float, cart)))
            assert back.rho == pytest.approx(state.rho, abs=1e-12)


class TestLyapunovColumn:
    def test_values_match_manual_evaluation_and_decrease(self):
        spec = ControllerSpec(ControllerKind.GLOBA, UNIT)
        fn = CompositeLyapunovFn(Compositor.sum_form(), LyapunovFn.for_controller(spec))
        traj = simulate(spec, PolarState(2.0, 1.0, -1.0),
                        SimConfig(dt=0.05, t_final=10.0), lyapunov=fn)
        for i in (0, len(traj) // 2, len(traj) - 1):
            assert traj.lyapunov[i] == fn.value(
                float(traj.rho[i]), float(traj.delta[i]), float(traj.gamma[i]))
        increases = np.diff(traj.lyapunov)
        assert np.max(increases) <= 1e-8

    def test_without_attachment_column_is_nan(self):
        spec = ControllerSpec(ControllerKind.GLOBA, UNIT)
        traj = simulate(spec, PolarState(1.0, 0.0, 0.0), SimConfig(dt=0.1, t_final=1.0))
        assert np.all(np.isnan(traj.lyapunov))


class TestCsv:
    HEADER = "t,x,y,theta,rho,delta,gamma,v,omega,V"

    def run(self):
        spec = ControllerSpec(ControllerKind.GLOBA, UNIT)
        fn = CompositeLyapunovFn(Compositor.sum_form(), LyapunovFn.for_controller(spec))
        return simulate(spec, PolarState(1.5, 0.7, -0.2),
                        SimConfig(dt=0.1, t_final=2.0), lyapunov=fn)

    def test_header_and_roundtrip(self, tmp_path):
        traj = self.run()
        path = tmp_path / "traj.csv"
        traj.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == self.HEADER
        assert len(lines) == len(traj) + 1
        row = lines[4].split(",")  # data row for sample index 3
        assert len(row) == 10
        # repr round-trips doubles exactly
        assert float(row[0]) == traj.t[3]
        assert float(row[4]) == traj.rho[3]
        assert float(row[9]) == traj.lyapunov[3]

    def test_byte_stability(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        self.run().to_csv(a)
        self.run().to_csv(b)
        assert a.read_bytes() == b.read_bytes()


class TestUnsteered:
    def test_gamma_drifts_to_quarter_turn(self):
        cfg = SimConfig(dt=0.05, t_final=30.0, capture_radius=0.0)
        traj = simulate_unsteered(1.0, PolarState(1.0, 0.0, 0.3), cfg)
        assert abs(traj.gamma[-1] - math.pi / 2) < 1e-4
        # steering off freezes heading, so both angles drift together
        drift = (traj.delta - traj.delta[0]) - (traj.gamma - traj.gamma[0])
        assert np.max(np.abs(drift)) < 1e-9

    def test_negative_start_drifts_to_negative_quarter_turn(self):
        cfg = SimConfig(dt=0.05, t_final=30.0, capture_radius=0.0)
        traj = simulate_unsteered(1.0, PolarState(1.0, 0.5, -1.2), cfg)
        assert abs(traj.gamma[-1] + math.pi / 2) < 1e-4

    def test_rho_monotone_with_positive_limit(self):
        cfg = SimConfig(dt=0.05, t_final=40.0, capture_radius=0.0)
        traj = simulate_unsteered(1.0, PolarState(1.0, 0.0, 0.3), cfg)
        assert np.all(np.diff(traj.rho) <= 0.0)
        assert traj.rho[-1] > 0.0
        # the decay rate dies with cos(gamma)^2, leaving a positive limit
        assert traj.rho[-1] - traj.rho[-2] > -1e-10

    def test_zero_angle_is_exact_exponential(self):
        cfg = SimConfig(dt=0.1, t_final=3.0, capture_radius=0.0)
        traj = simulate_unsteered(2.0, PolarState(1.0, 0.4, 0.0), cfg)
        expected = np.exp(-2.0 * traj.t)
        assert np.max(np.abs(traj.rho - expected)) < 1e-9
        assert np.all(traj.delta == 0.4)
        assert np.all(traj.omega == 0.0)

    def test_rejects_bad_gain(self):
        with pytest.raises(ValueError, match="k1"):
            simulate_unsteered(0.0, PolarState(1.0, 0.0, 0.0))
