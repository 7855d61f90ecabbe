"""Fixed-step propagation against independent oracles."""

import numpy as np
import pytest

from qmaser.evolve import (
    IntegrationAbort,
    IntegrationConfig,
    SnapshotObserver,
    StrideObserver,
    build_superoperator,
    default_step,
    empirical_order,
    liouvillian_expm,
    propagate,
    steady_state_power_fit,
    top_fock_occupancy,
)
from qmaser.models import DampedJCMParams, MaserParams


def random_density(dim, rng):
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = m @ m.conj().T
    return rho / np.trace(rho).real


def excited_vacuum(model):
    """Matter fully in its upper coupled level, field in vacuum."""
    rho = np.zeros((model.dim, model.dim), dtype=complex)
    rho[model.q * model.n_fock, model.q * model.n_fock] = 1.0
    return rho


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            IntegrationConfig(step_h=0.0)
        with pytest.raises(ValueError):
            IntegrationConfig(t_final=-1.0)
        with pytest.raises(ValueError):
            IntegrationConfig(sample_stride=0)

    def test_default_step_resolves_both_scales(self):
        m = MaserParams(n_fock=4).build()
        # coupling is the fast scale at the reference point
        assert default_step(m) == 0.01 / m.lam
        slow = DampedJCMParams(gamma=50.0, n_th=0.0, lam=1.0, n_fock=4).build()
        assert default_step(slow) == 0.02 / max(c.rate for c in slow.channels)

    def test_default_step_needs_dynamics(self):
        with pytest.raises(ValueError, match="neither"):
            default_step(DampedJCMParams(gamma=0.0, lam=0.0, n_fock=4).build())


class TestPropagation:
    def test_matches_superoperator_exponential(self):
        """RK4 endpoint against expm of the explicit generator matrix."""
        params = DampedJCMParams(gamma=0.08, n_th=0.6, lam=1.0, n_fock=4)
        model = params.build()
        rng = np.random.default_rng(31)
        rho0 = random_density(model.dim, rng)
        t = 3.0
        cfg = IntegrationConfig(step_h=0.002, t_final=t, sample_stride=100,
                                occupancy_threshold=2.0)
        traj = propagate(rho0, model, cfg)
        ref = liouvillian_expm(rho0, model, traj.final_time)
        assert np.max(np.abs(traj.final_state - ref)) < 1e-9

    def test_superoperator_matches_liouvillian(self):
        model = MaserParams(n_fock=3).build()
        rng = np.random.default_rng(32)
        rho = random_density(model.dim, rng)
        sup = build_superoperator(model)
        direct = model.liouvillian(rho)
        assert np.allclose((sup @ rho.reshape(-1)).reshape(rho.shape), direct,
                           atol=1e-14)

    def test_expm_oracle_refuses_large_systems(self):
        with pytest.raises(ValueError, match="36"):
            liouvillian_expm(np.eye(42) / 42, MaserParams(n_fock=14).build(),
                             1.0)

    def test_empirical_convergence_order(self):
        params = DampedJCMParams(gamma=0.05, n_th=0.3, lam=1.0, n_fock=4)
        model = params.build()
        rho0 = excited_vacuum(model)
        order = empirical_order(model, rho0, t=1.6, h0=0.02)
        assert order > 3.7

    def test_trace_preserved(self):
        model = MaserParams(n_fock=5).build()
        rho0 = excited_vacuum(model)
        cfg = IntegrationConfig(step_h=0.005, t_final=5.0, sample_stride=50,
                                occupancy_threshold=2.0)
        traj = propagate(rho0, model, cfg)
        assert traj.status == "completed"
        assert np.max(traj.trace_err) < 1e-12
        assert np.max(traj.herm_err) < 1e-12

    def test_sample_grid(self):
        model = DampedJCMParams(gamma=0.1, n_th=0.2, lam=1.0, n_fock=4).build()
        cfg = IntegrationConfig(step_h=0.01, t_final=1.0, sample_stride=25,
                                occupancy_threshold=2.0)
        traj = propagate(excited_vacuum(model), model, cfg)
        assert np.allclose(traj.times, [0.0, 0.25, 0.5, 0.75, 1.0])
        assert traj.final_time == 1.0

    def test_leftover_steps_are_integrated(self):
        # 100 steps with stride 30 leaves a 10-step tail
        model = DampedJCMParams(gamma=0.1, n_th=0.2, lam=1.0, n_fock=4).build()
        cfg = IntegrationConfig(step_h=0.01, t_final=1.0, sample_stride=30,
                                occupancy_threshold=2.0)
        traj = propagate(excited_vacuum(model), model, cfg)
        assert np.isclose(traj.final_time, 1.0)
        ref = liouvillian_expm(excited_vacuum(model), model, 1.0)
        assert np.max(np.abs(traj.final_state - ref)) < 1e-7

    def test_shape_mismatch(self):
        model = MaserParams(n_fock=4).build()
        with pytest.raises(ValueError, match="shape"):
            propagate(np.eye(6, dtype=complex) / 6, model,
                      IntegrationConfig(t_final=1.0))

    def test_occupancy_early_return(self):
        """Rabi transfer into the top Fock level stops the window."""
        model = DampedJCMParams(gamma=0.0, n_th=0.0, lam=1.0, n_fock=2).build()
        rho0 = excited_vacuum(model)  # |e,0>; |g,1> is the truncation edge
        cfg = IntegrationConfig(step_h=0.01, t_final=4.0, sample_stride=10,
                                occupancy_threshold=0.5)
        traj = propagate(rho0, model, cfg)
        assert traj.status == "occupancy"
        # the edge population sin^2(lam t) first tops 1/2 at the 0.8 sample
        assert np.isclose(traj.final_time, 0.8)
        assert traj.top_occupancy[-1] > 0.5

    def test_trace_guard_aborts(self):
        model = DampedJCMParams(gamma=0.1, n_th=0.0, lam=1.0, n_fock=4).build()
        rho0 = excited_vacuum(model) * 1.01  # 1% trace defect
        cfg = IntegrationConfig(step_h=0.01, t_final=1.0, trace_tol=1e-3)
        with pytest.raises(IntegrationAbort, match="trace"):
            propagate(rho0, model, cfg)

    def test_trace_guard_catches_blowup(self):
        # an absurd step makes RK4 explode; cancellation error in the trace
        # grows with the state magnitude and trips the guard mid-run
        model = DampedJCMParams(gamma=2.0, n_th=1.0, lam=1.0, n_fock=4).build()
        cfg = IntegrationConfig(step_h=5.0, t_final=100.0, sample_stride=1,
                                occupancy_threshold=np.inf)
        with pytest.raises(IntegrationAbort, match="trace"):
            propagate(excited_vacuum(model), model, cfg)

    def test_top_fock_occupancy(self):
        model = MaserParams(n_fock=4).build()
        rho = np.zeros((model.dim, model.dim), dtype=complex)
        rho[3, 3] = 0.25   # matter 0, top Fock level
        rho[4, 4] = 0.75   # matter 1, vacuum
        assert np.isclose(top_fock_occupancy(rho, 3, 4), 0.25)


class TestObservers:
    def test_snapshot_capture(self):
        model = DampedJCMParams(gamma=0.1, n_th=0.2, lam=1.0, n_fock=4).build()
        snaps = SnapshotObserver([0.42, 0.9])
        cfg = IntegrationConfig(step_h=0.01, t_final=1.0, sample_stride=10,
                                occupancy_threshold=2.0)
        traj = propagate(excited_vacuum(model), model, cfg, observers=(snaps,))
        times = [t for t, _ in traj.snapshots]
        # snapped to the first sample at or after the request
        assert np.allclose(times, [0.5, 0.9])
        for _, rho in traj.snapshots:
            assert np.isclose(np.trace(rho).real, 1.0)

    def test_stride_observer_subsampling(self):
        class PopObserver(StrideObserver):
            name = "pop"
            columns = ("p_top",)

            def sample(self, ctx):
                return (float(ctx.rho[ctx.n_fock, ctx.n_fock].real),)

        model = DampedJCMParams(gamma=0.1, n_th=0.2, lam=1.0, n_fock=4).build()
        ob = PopObserver(every=2)
        cfg = IntegrationConfig(step_h=0.01, t_final=1.0, sample_stride=10,
                                occupancy_threshold=2.0)
        traj = propagate(excited_vacuum(model), model, cfg, observers=(ob,))
        table = traj.tables["pop"]
        # base samples at 0.0 .. 1.0; every=2 keeps the even ones
        assert np.allclose(table["times"], [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
        assert table["data"].shape == (6, 1)

    def test_observer_rejects_bad_stride(self):
        with pytest.raises(ValueError):
            StrideObserver(every=0)


class TestSteadyStateFit:
    def test_exact_linear(self):
        t = np.linspace(0.0, 10.0, 50)
        slope, r2 = steady_state_power_fit(t, 3.0 * t + 1.0, 20)
        assert np.isclose(slope, 3.0)
        assert r2 > 0.999999

    def test_constant_window(self):
        t = np.linspace(0.0, 10.0, 50)
        slope, r2 = steady_state_power_fit(t, np.full(50, 2.5), 20)
        assert slope == 0.0 and r2 == 1.0

    def test_window_validation(self):
        t = np.linspace(0.0, 1.0, 10)
        with pytest.raises(ValueError):
            steady_state_power_fit(t, t, 1)
        with pytest.raises(ValueError):
            steady_state_power_fit(t, t, 11)
