import numpy as np
import pytest

import linalg as la
from flow import (
    DISCARD,
    HORIZON,
    STATIONARITY,
    FlowConfig,
    FlowState,
    Trajectory,
    descent_rate,
    integrate,
    pack,
    packed_size,
    rhs,
    unpack,
)
from linalg import SizeError
from objective import (
    CCFactorization,
    ValidationError,
    cc_state,
    objective_value,
    stationarity_residual,
)
from states import random_cc_state, random_density, random_factorization
from stiefel import ortho_residual
from utils import rng


def _split_velocity(v, f):
    n, m, N = f.dims
    return (la.reshape(v[:n*N], n, N), la.reshape(v[n*N:n*N + m*N], m, N),
            v[n*N + m*N:])


### config

def test_config_defaults_and_overrides():
    cfg = FlowConfig()
    assert (cfg.abs_tol, cfg.rel_tol, cfg.t_max) == (1e-12, 1e-12, 5000.)
    assert (cfg.grad_tol, cfg.discard_eps, cfg.drift_tol) == (1e-10, 1e-10, 1e-8)
    assert cfg.replace(t_max=10, grad_tol=None).t_max == 10.
    assert cfg.as_dict()['max_step'] is None
    with pytest.raises(ValueError):
        cfg.replace(abs_tol=0.).validate()


### packing

def test_pack_unpack_round_trip(gen):
    f = random_factorization(5, 3, 3, gen)
    s = pack(f)
    g = unpack(s)
    np.testing.assert_array_equal(g.U, f.U)
    np.testing.assert_array_equal(g.V, f.V)
    np.testing.assert_array_equal(g.theta, f.theta)
    np.testing.assert_array_equal(pack(g).packed, s.packed)


def test_packed_length():
    assert packed_size(2, 2, 2) == 10
    f = CCFactorization(np.eye(2), np.eye(2), [.5, .5])
    assert pack(f).packed.size == 10


def test_unpack_rejects_drift_and_bad_length(gen):
    f = random_factorization(4, 3, 2, gen)
    y = pack(f).packed.copy()
    y[0] += 1e-3
    with pytest.raises(ValidationError):
        unpack(FlowState(y, f.dims))
    with pytest.raises(SizeError):
        unpack(FlowState(y[:-1], f.dims))


### right-hand side

def test_rhs_vanishes_at_exact_fit(gen):
    f = random_factorization(4, 3, 3, gen)
    np.testing.assert_allclose(rhs(pack(f), cc_state(f)), 0., atol=1e-10)


def test_rhs_theta_velocity_sums_to_zero(gen):
    for _ in range(20):
        rho = random_density(4, 3, 12, gen)
        f = random_factorization(4, 3, 3, gen)
        _, _, dtheta = _split_velocity(rhs(pack(f), rho), f)
        assert abs(dtheta.sum()) <= 1e-14 * f.N


def test_flow_descends(gen):
    for _ in range(50):
        n, m = gen.integers(2, 6), gen.integers(2, 5)
        N = gen.integers(1, min(n, m) + 1)
        rho = random_density(n, m, n * m, gen)
        f = random_factorization(n, m, N, gen)
        rate = descent_rate(rho, f)
        assert rate <= 1e-14

        # dF/dt = -(|v|_c^2) in the canonical metric
        dU, dV, dtheta = _split_velocity(rhs(pack(f), rho), f)
        canonical = (np.linalg.norm(dU) ** 2
                     - .5 * np.linalg.norm(f.U.T @ dU) ** 2
                     + np.linalg.norm(dV) ** 2
                     - .5 * np.linalg.norm(f.V.T @ dV) ** 2
                     + dtheta @ dtheta)
        assert rate == pytest.approx(-canonical, rel=1e-9, abs=1e-15)
        # so the rate is bounded by the euclidean speed, with equality only
        # when U^T dU and V^T dV vanish
        euclidean = (np.linalg.norm(dU) ** 2 + np.linalg.norm(dV) ** 2
                     + dtheta @ dtheta)
        assert -rate <= euclidean * (1. + 1e-9) + 1e-15


### integration

def _run(target, init, **kw):
    cfg = FlowConfig(**kw)
    f, traj = integrate(target, init, cfg)
    return cfg, f, traj


def test_exact_fit_terminates_immediately(gen):
    rho, f = random_cc_state(4, 3, 2, gen)
    _, g, traj = _run(rho, f)
    assert traj.reason == STATIONARITY
    assert traj.t == 0.
    assert len(traj.samples) == 1
    assert not traj.discards()
    assert traj.samples[0].grad_norm <= 1e-10
    np.testing.assert_array_equal(g.U, f.U)


def test_recovers_rank_one_state_with_one_discard():
    rho, truth = random_cc_state(3, 3, 1, rng(11, 'target'))
    init = random_factorization(3, 3, 2, rng(11, 'init'))
    cfg, f, traj = _run(rho, init, t_max=500.)
    assert len(traj.discards()) == 1
    assert traj.discards()[0].kind == DISCARD
    assert f.N == 1
    assert objective_value(rho, f) <= 1e-8
    assert traj.max_sum_error() <= 1e-10
    assert np.isnan(traj.samples[-1].theta).sum() == 1


def test_trajectory_invariants(gen):
    rho = random_density(3, 3, 9, gen)
    init = random_factorization(3, 3, 3, gen)
    cfg, f, traj = _run(rho, init, t_max=200.)
    ts = traj.times()
    assert np.all(np.diff(ts) > 0)
    assert traj.max_sum_error() <= 1e-10
    assert traj.max_ortho_residual() <= 1e-8
    assert not traj.repairs()
    assert traj.is_descending(cfg.abs_tol, cfg.rel_tol, discard_slack=1e-9)
    assert objective_value(rho, f) <= objective_value(rho, init)
    assert traj.reason in (STATIONARITY, HORIZON)
    if traj.reason == STATIONARITY:
        assert stationarity_residual(rho, f) <= 10 * cfg.grad_tol
    assert traj.events[-1].kind == 'terminate'


def test_stationarity_exit_satisfies_residual_bound():
    rho, _ = random_cc_state(3, 2, 2, rng(4, 'target'))
    init = random_factorization(3, 2, 2, rng(4, 'init'))
    cfg, f, traj = _run(rho, init, t_max=2000.)
    assert traj.reason == STATIONARITY
    assert stationarity_residual(rho, f) <= 10 * cfg.grad_tol


def test_horizon_is_reported(gen):
    rho = random_density(3, 2, 6, gen)
    init = random_factorization(3, 2, 2, gen)
    _, _, traj = _run(rho, init, t_max=.5)
    assert traj.reason == HORIZON
    assert traj.t == pytest.approx(.5)


def test_integration_is_deterministic():
    rho = random_density(3, 3, 9, rng(2, 'target'))
    init = random_factorization(3, 3, 3, rng(2, 'init'))
    _, _, a = _run(rho, init, t_max=50.)
    _, _, b = _run(rho, init, t_max=50.)
    assert len(a.samples) == len(b.samples)
    for s, r in zip(a.samples, b.samples):
        assert s.t == r.t and s.objective == r.objective
        np.testing.assert_array_equal(s.theta, r.theta)
    assert a.events == b.events


def test_manifold_is_preserved_without_repairs():
    rho = random_density(16, 8, 128, rng(9, 'target'))
    init = random_factorization(16, 8, 8, rng(9, 'init'))
    _, _, traj = _run(rho, init, t_max=50.)
    assert not traj.repairs()
    assert traj.max_ortho_residual() <= 1e-8


def test_drift_is_repaired(gen):
    rho = random_density(4, 3, 12, gen)
    init = random_factorization(4, 3, 2, gen)
    # a loose stepper with a tight drift budget forces repairs
    _, f, traj = _run(rho, init, t_max=20., abs_tol=1e-4, rel_tol=1e-4,
                      drift_tol=1e-9)
    assert traj.repairs()
    assert ortho_residual(f.U) <= 1e-9 and ortho_residual(f.V) <= 1e-9


def test_integrate_validates_input(gen):
    init = random_factorization(3, 2, 2, gen)
    bad = CCFactorization(init.U, init.V, [.7, .7], validate=False)
    with pytest.raises(ValidationError):
        integrate(random_density(3, 2, 6, gen), bad)
    with pytest.raises(SizeError):
        integrate(np.eye(5) / 5, init)


def test_descending_check_flags_increase():
    from flow import Sample

    traj = Trajectory(1)
    for t, F in [(0., 1.), (1., .5), (2., .6)]:
        traj.add_sample(Sample(t, F, 1., np.ones(1), 0., 0., 0., 1))
    assert not traj.is_descending(1e-12, 1e-12)
    assert not traj.add_sample(Sample(1.5, 0., 1., np.ones(1), 0., 0., 0., 1))

    # same time replaces the last sample
    assert traj.add_sample(Sample(2., .4, 1., np.ones(1), 0., 0., 0., 1))
    assert len(traj.samples) == 3 and traj.samples[-1].objective == .4
    assert traj.is_descending(1e-12, 1e-12)


def test_chain_shifts_times_and_maps_survivors():
    from flow import Sample

    def sample(t, F, theta):
        theta = np.asarray(theta, dtype=float)
        return Sample(t, F, 1., theta, 0., 0., 0., int(np.sum(~np.isnan(theta))))

    first = Trajectory(3)
    first.add_sample(sample(0., 1., [.5, .25, .25]))
    first.add_sample(sample(2., .5, [.5, np.nan, .5]))
    first.finish(2., HORIZON)

    rest = Trajectory(2)
    rest.add_sample(sample(0., .5, [.5, .5]))
    rest.add_sample(sample(1., .25, [.75, .25]))
    rest.finish(1., STATIONARITY)

    first.chain(rest)
    np.testing.assert_array_equal(first.times(), [0., 2., 3.])
    np.testing.assert_array_equal(first.samples[-1].theta, [.75, np.nan, .25])
    assert first.reason == STATIONARITY
    assert [e.t for e in first.events] == [2., 3.]
    with pytest.raises(SizeError):
        first.chain(Trajectory(3))


@pytest.mark.slow
def test_decomposition_of_rank_three_state():
    successes = 0
    for seed in range(10):
        rho, _ = random_cc_state(16, 8, 3, rng(seed, 'target'))
        init = random_factorization(16, 8, 8, rng(seed, 'init'))
        cfg, f, traj = _run(rho, init)
        assert traj.max_sum_error() <= 1e-10
        assert traj.max_ortho_residual() <= 1e-8
        assert not traj.repairs()
        if f.N == 3 and objective_value(rho, f) <= 1e-8 \
                and len(traj.discards()) == 5:
            successes += 1
    assert successes >= 9
