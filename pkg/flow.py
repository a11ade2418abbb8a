"""
descent flow for (U, V, theta):

    dtheta/dt = -(e - mean(e))
    dU/dt     = -2 skew(dF/dU U^T) U
    dV/dt     = -2 skew(dF/dV V^T) V

integrated with the Dormand-Prince 4(5) pair of scipy's RK45 stepper, one
accepted step at a time so that weights reaching zero can be discarded and
orthonormality drift repaired between steps
"""

from collections import namedtuple

import numpy as np

from scipy.integrate import RK45
from scipy.optimize import bisect

import linalg as la
from linalg import SizeError
from objective import (
    SUM_TOL,
    CCFactorization,
    ValidationError,
    gradient,
    riemannian_bundle,
)
from stiefel import ortho_residual, reorthonormalize
from utils import get_logger


LOGGER = get_logger(__name__)


class NumericalError(ArithmeticError):
    def __init__(self, msg, trajectory=None):
        self.trajectory = trajectory
        super().__init__(msg)


### config

_CONFIG_FIELDS = ('abs_tol', 'rel_tol', 't_max', 'grad_tol',
                  'discard_eps', 'drift_tol', 'record_stride', 'max_step')


class FlowConfig(namedtuple('FlowConfig', _CONFIG_FIELDS)):
    """
    abs_tol, rel_tol  error tolerances of the adaptive stepper
    t_max             integration horizon
    grad_tol          stop once the velocity norm falls to this
    discard_eps       weights at or below this are removed
    drift_tol         repair U, V once |Y^T Y - I|_F exceeds this
    record_stride     record every k-th accepted step
    max_step          cap on the step size
    """

    __slots__ = ()

    def __new__(cls, abs_tol=1e-12, rel_tol=1e-12, t_max=5000.,
                grad_tol=1e-10, discard_eps=1e-10, drift_tol=1e-8,
                record_stride=1, max_step=np.inf):
        return super().__new__(cls, float(abs_tol), float(rel_tol),
                               float(t_max), float(grad_tol),
                               float(discard_eps), float(drift_tol),
                               int(record_stride), float(max_step))

    def replace(self, **kw):
        return self._replace(**{k: v for k, v in kw.items() if v is not None})

    def validate(self):
        for name, val in self._asdict().items():
            if not val > 0:
                raise ValueError('FlowConfig.%s must be positive, got %r'
                                 % (name, val))
        return self

    def as_dict(self):
        d = dict(self._asdict())
        if not np.isfinite(d['max_step']):
            d['max_step'] = None
        return d


### state packing

class FlowState(namedtuple('FlowState', 'packed dims')):
    """vec(U), vec(V), theta in one vector; dims = (n, m, N)"""

    __slots__ = ()

    @property
    def size(self):
        return packed_size(*self.dims)


def packed_size(n, m, N):
    return n * N + m * N + N


def _split(y, dims):
    n, m, N = dims
    y = np.asarray(y, dtype=float)
    if y.size != packed_size(n, m, N):
        raise SizeError('packed state has length %s, dims %s need %s'
                        % (y.size, dims, packed_size(n, m, N)))
    U = la.reshape(y[:n*N], n, N)
    V = la.reshape(y[n*N:n*N + m*N], m, N)
    return U, V, y[n*N + m*N:]


def pack(f):
    return FlowState(np.concatenate([la.vec(f.U), la.vec(f.V), f.theta]),
                     f.dims)


def unpack(s, drift_tol=1e-8, sum_tol=SUM_TOL):
    U, V, theta = _split(s.packed, s.dims)
    return CCFactorization(U, V, theta, ortho_tol=drift_tol, sum_tol=sum_tol)


### right-hand side

def _velocity(rho, f):
    b = riemannian_bundle(rho, f)
    v = -np.concatenate([la.vec(b.dU), la.vec(b.dV), b.dTheta])
    if not np.all(np.isfinite(v)):
        raise NumericalError('non-finite velocity (objective %r, theta %s)'
                             % (b.value, np.array2string(f.theta, precision=3)))
    return v, b.value


def rhs(state, rho):
    U, V, theta = _split(state.packed, state.dims)
    f = CCFactorization(U, V, theta, validate=False)
    return _velocity(rho, f)[0]


def descent_rate(rho, f):
    """dF/dt = <grad F, velocity> along the flow at f"""
    g = gradient(rho, f)
    v = rhs(pack(f), rho)
    grad = np.concatenate([la.vec(g.dU), la.vec(g.dV), g.dTheta])
    return float(grad @ v)


### trajectory

Sample = namedtuple('Sample', 't objective theta_sum theta ortho_u ortho_v '
                              'grad_norm rank')
Event = namedtuple('Event', 't kind detail')

DISCARD, REPAIR, TERMINATE = 'discard', 'reorthonormalize', 'terminate'
STATIONARITY, HORIZON, STALL = 'stationarity', 'horizon', 'stall'


class Trajectory(object):
    """
    samples at accepted steps; `theta` of a sample has one slot per initial
    column, nan once that column is discarded
    """

    def __init__(self, n_columns):
        self.n_columns = n_columns
        self.samples = []
        self.events = []
        self.reason = None
        self.n_steps = 0

    def add_sample(self, sample):
        """
        times must increase; a sample at the last time replaces that one
        (the state jumped there, e.g. a discard)
        """
        if self.samples and sample.t <= self.samples[-1].t:
            if sample.t < self.samples[-1].t:
                return False
            self.samples[-1] = sample
            return True
        self.samples.append(sample)
        return True

    def add_event(self, t, kind, detail=''):
        self.events.append(Event(float(t), kind, detail))

    def finish(self, t, reason, detail=''):
        self.reason = reason
        self.add_event(t, TERMINATE, reason + (': ' + detail if detail else ''))

    @property
    def t(self):
        return self.samples[-1].t if self.samples else 0.

    def times(self):
        return np.array([s.t for s in self.samples])

    def objectives(self):
        return np.array([s.objective for s in self.samples])

    def theta_sums(self):
        return np.array([s.theta_sum for s in self.samples])

    def max_sum_error(self):
        return float(np.max(np.abs(self.theta_sums() - 1.))) \
            if self.samples else 0.

    def max_ortho_residual(self):
        if not self.samples:
            return 0.
        return float(max(max(s.ortho_u, s.ortho_v) for s in self.samples))

    def _of_kind(self, kind):
        return [e for e in self.events if e.kind == kind]

    def discards(self):
        return self._of_kind(DISCARD)

    def repairs(self):
        return self._of_kind(REPAIR)

    def chain(self, other):
        """
        append `other`, a run started from this one's final point. its times
        are shifted by self.t and its theta slots mapped onto the surviving
        columns
        """
        t0 = self.t
        labels = np.flatnonzero(~np.isnan(self.samples[-1].theta)) \
            if self.samples else np.arange(other.n_columns)
        if labels.size != other.n_columns:
            raise SizeError('cannot chain a %s-column run onto %s survivors'
                            % (other.n_columns, labels.size))
        for s in other.samples[1:]:
            theta = np.full(self.n_columns, np.nan)
            theta[labels] = s.theta
            self.add_sample(s._replace(t=t0 + s.t, theta=theta))
        self.events.extend(e._replace(t=t0 + e.t) for e in other.events)
        self.n_steps += other.n_steps
        self.reason = other.reason
        return self

    def is_descending(self, abs_tol, rel_tol, discard_slack=0.):
        """
        objective non-increasing up to 10*max(abs_tol, rel_tol*F) per step;
        steps that straddle a discard or repair get `discard_slack` extra
        """
        jumps = set(e.t for e in self.events if e.kind in (DISCARD, REPAIR))
        F = self.objectives()
        ts = self.times()
        for i in range(1, len(F)):
            slack = 10. * max(abs_tol, rel_tol * abs(F[i-1]))
            if any(ts[i-1] < tj <= ts[i] for tj in jumps):
                slack += discard_slack
            if F[i] > F[i-1] + slack:
                return False
        return True


### integration

def _sample(t, rho, f, labels, n_columns):
    v, value = _velocity(rho, f)
    theta = np.full(n_columns, np.nan)
    theta[labels] = f.theta
    return Sample(t=float(t),
                  objective=float(value),
                  theta_sum=float(f.theta.sum()),
                  theta=theta,
                  ortho_u=ortho_residual(f.U),
                  ortho_v=ortho_residual(f.V),
                  grad_norm=float(np.linalg.norm(v)),
                  rank=f.N)


def _rebuild(t, y, dims, cfg, traj):
    """
    factorization from a raw state vector; U or V drifting past drift_tol
    are replaced by their polar factor. returns (factorization, repaired)
    """
    if not np.all(np.isfinite(y)):
        raise NumericalError('non-finite state at t=%.6g' % t, traj)
    U, V, theta = _split(y, dims)
    repaired = False
    factors = {'U': U, 'V': V}
    for name, Y in sorted(factors.items()):
        res = ortho_residual(Y)
        if res > cfg.drift_tol:
            LOGGER.warning('t=%.6g: |%s^T %s - I|_F = %.3e > %.1e, repairing'
                           % (t, name, name, res, cfg.drift_tol))
            traj.add_event(t, REPAIR, '%s residual=%.3e' % (name, res))
            factors[name] = reorthonormalize(Y).value
            repaired = True
    f = CCFactorization(factors['U'], factors['V'], theta, validate=False)
    return f, repaired


def _discard(t, f, labels, cfg, traj, force=()):
    """
    remove every weight <= discard_eps, plus the columns in `force`, and
    rescale the survivors to sum to one. the last column is never removed
    """
    drop = np.union1d(np.flatnonzero(f.theta <= cfg.discard_eps),
                      np.asarray(force, dtype=int))
    if not drop.size:
        return f, labels
    if drop.size == f.N:
        drop = np.delete(drop, np.argmax(f.theta[drop]))
    keep = np.setdiff1d(np.arange(f.N), drop)
    total = f.theta[keep].sum()
    for i in drop:
        traj.add_event(t, DISCARD, 'column=%s theta=%.3e'
                       % (labels[i] + 1, f.theta[i]))
        LOGGER.info('t=%.6g: discarding column %s (theta=%.3e), rank %s -> %s'
                    % (t, labels[i] + 1, f.theta[i], f.N, keep.size))
    change = abs(total - 1.)
    if change > f.N * cfg.discard_eps:
        LOGGER.warning('renormalizing theta after discard changed it by %.3e'
                       % change)
    else:
        LOGGER.debug('renormalized theta by %.3e' % change)
    f = CCFactorization(f.U[:, keep], f.V[:, keep], f.theta[keep] / total,
                        validate=False)
    return f, labels[keep]


def _crossing(dense, lo, hi, index, eps):
    """first time in [lo, hi] at which component `index` reaches eps"""
    g = lambda s: dense(s)[index] - eps
    if g(lo) <= 0.:
        return lo
    if g(hi) > 0.:
        return hi
    return bisect(g, lo, hi, xtol=1e-14 * max(1., abs(hi)), maxiter=200)


def _check_init(rho, init, cfg):
    R = np.asarray(getattr(rho, 'value', rho), dtype=float)
    nm = init.n * init.m
    if R.shape != (nm, nm):
        raise SizeError('rho is %s, initial factorization needs %sx%s'
                        % (R.shape, nm, nm))
    init.validate(ortho_tol=cfg.drift_tol, sum_tol=SUM_TOL)
    return R


def _stalled(solver):
    if solver.status == 'failed':
        return True
    h = solver.step_size
    return h is not None and solver.t > 0. and h < 1e-14 * solver.t


def integrate(rho, init, cfg=None):
    """
    integrate the flow from `init` until stationarity, the horizon t_max,
    or a stalled step controller. returns (final factorization, trajectory)

    the solver is restarted from the current point after every discard or
    drift repair, since either one changes the state discontinuously
    """
    cfg = (cfg or FlowConfig()).validate()
    R = _check_init(rho, init, cfg)

    traj = Trajectory(init.N)
    labels = np.arange(init.N)
    f, t, force = init, 0., ()
    LOGGER.info('START flow n=%s m=%s N=%s t_max=%g'
                % (init.n, init.m, init.N, cfg.t_max))

    while traj.reason is None:
        f, labels = _discard(t, f, labels, cfg, traj, force)
        force = ()
        sample = _sample(t, R, f, labels, traj.n_columns)
        traj.add_sample(sample)
        if sample.grad_norm <= cfg.grad_tol:
            traj.finish(t, STATIONARITY, 'grad_norm=%.3e' % sample.grad_norm)
            break
        if t >= cfg.t_max:
            traj.finish(t, HORIZON)
            break

        dims = f.dims
        n, m, N = dims
        offset = n * N + m * N
        fun = lambda s, y: _velocity(
            R, CCFactorization(*_split(y, dims), validate=False))[0]
        solver = RK45(fun, t, pack(f).packed, cfg.t_max,
                      rtol=cfg.rel_tol, atol=cfg.abs_tol,
                      max_step=cfg.max_step)

        while True:
            t_old = solver.t
            solver.step()
            if _stalled(solver):
                traj.finish(solver.t, STALL,
                            'step size %.3e at t=%.6g, the system may be '
                            'stiff; loosen the tolerances'
                            % (solver.step_size or 0., solver.t))
                LOGGER.warning('step controller stalled at t=%.6g' % solver.t)
                break
            traj.n_steps += 1
            y, t_new = solver.y, solver.t

            low = np.flatnonzero(y[offset:] <= cfg.discard_eps)
            if low.size:
                # back up to the first crossing and drop that column there
                dense = solver.dense_output()
                crossings = [_crossing(dense, t_old, t_new, offset + i,
                                       cfg.discard_eps) for i in low]
                first = int(np.argmin(crossings))
                t = crossings[first]
                f, _ = _rebuild(t, dense(t), dims, cfg, traj)
                force = [low[first]]
                break

            f, repaired = _rebuild(t_new, y, dims, cfg, traj)
            t = t_new
            if repaired:
                break

            grad_norm = float(np.linalg.norm(solver.f))
            last = grad_norm <= cfg.grad_tol or solver.status == 'finished'
            if last or traj.n_steps % cfg.record_stride == 0:
                traj.add_sample(_sample(t, R, f, labels, traj.n_columns))
            if grad_norm <= cfg.grad_tol:
                traj.finish(t, STATIONARITY, 'grad_norm=%.3e' % grad_norm)
                break
            if solver.status == 'finished':
                traj.finish(t, HORIZON)
                break

    try:
        f.validate(ortho_tol=cfg.drift_tol, sum_tol=SUM_TOL)
    except ValidationError as ex:
        raise NumericalError('final state violates %s (%.3e)'
                             % (ex.invariant, ex.value), traj)
    LOGGER.info('DONE flow: %s at t=%.6g, objective %.6e, rank %s, '
                '%s discard(s), %s repair(s), %s steps'
                % (traj.reason, traj.t, traj.samples[-1].objective, f.N,
                   len(traj.discards()), len(traj.repairs()), traj.n_steps))
    return f, traj
