"""
density matrices on R^n ⊗ R^m, synthetic targets, and the quantumness
driver Q(rho) = min |rho - sigma|_F over classical-classical sigma
"""

import traceback as tb

from collections import namedtuple

import numpy as np

import linalg as la
from flow import HORIZON, FlowConfig, NumericalError, integrate
from linalg import SizeError
from objective import CCFactorization, ValidationError, cc_state
from stiefel import DegeneracyError, random_stiefel, reorthonormalize
from utils import get_logger, rng


LOGGER = get_logger(__name__)

SYM_TOL = 1e-12
PSD_TOL = 1e-10
TRACE_TOL = 1e-12

# smallest generated weight is EIG_FLOOR / r
EIG_FLOOR = .01

QUANTUMNESS_RESTARTS = 10
SWEEP_RESTARTS = 5
CONSISTENCY_TRIALS = 10
CONSISTENCY_RESTARTS = 5


class UnsupportedDimension(ValueError):
    pass


class RestartsFailed(RuntimeError):
    def __init__(self, errors):
        self.errors = errors
        super().__init__('all %s restart(s) failed; first: %s'
                         % (len(errors), errors[0] if errors else '?'))


### density matrices

Check = namedtuple('Check', 'invariant value tol ok')


def check_density(A, sym_tol=SYM_TOL, psd_tol=PSD_TOL, trace_tol=TRACE_TOL):
    """one Check per invariant: symmetry, positivity, trace"""
    A = np.asarray(A, dtype=float)
    asym = float(np.max(np.abs(A - A.T))) if A.size else 0.
    lam = float(np.linalg.eigvalsh(.5 * (A + A.T))[0])
    tr = float(np.trace(A))
    return [Check('symmetry', asym, sym_tol, asym <= sym_tol),
            Check('positivity', lam, psd_tol, lam >= -psd_tol),
            Check('trace', tr, trace_tol, abs(tr - 1.) <= trace_tol)]


class DensityMatrix(object):
    """real symmetric PSD trace-one matrix on R^n ⊗ R^m"""

    __slots__ = ('dim_a', 'dim_b', 'value')

    def __init__(self, value, dim_a, dim_b, sym_tol=SYM_TOL, psd_tol=PSD_TOL,
                 trace_tol=TRACE_TOL):
        A = la.as_matrix(value, 'density matrix')
        nm = dim_a * dim_b
        if dim_a < 1 or dim_b < 1 or A.shape != (nm, nm):
            raise SizeError('density matrix is %s, dims %s x %s need %sx%s'
                            % (A.shape, dim_a, dim_b, nm, nm))
        for c in check_density(A, sym_tol, psd_tol, trace_tol):
            if not c.ok:
                raise ValidationError(
                    c.invariant, c.value,
                    '%s invariant violated: value %.12g (tolerance %.1e)'
                    % (c.invariant, c.value, c.tol))
        A = .5 * (A + A.T)
        A.setflags(write=False)
        self.dim_a, self.dim_b, self.value = dim_a, dim_b, A

    @property
    def dim(self):
        return self.value.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.value if dtype is None else self.value.astype(dtype)

    def __repr__(self):
        return 'DensityMatrix(%s x %s)' % (self.dim_a, self.dim_b)


def _gen(seed, *names):
    if isinstance(seed, np.random.Generator):
        return seed
    return rng(0 if seed is None else seed, *names)


### generators

def random_simplex(N, gen, floor=0.):
    """uniform (Dirichlet(1, ..., 1)) weights, each at least `floor`"""
    return floor + (1. - N * floor) * gen.dirichlet(np.ones(N))


def random_factorization(n, m, N, seed, method='qr'):
    gen = _gen(seed, 'factorization')
    U = random_stiefel(n, N, gen, method)
    V = random_stiefel(m, N, gen, method)
    return CCFactorization(U, V, random_simplex(N, gen))


def random_cc_state(n, m, r, seed):
    if not 1 <= r <= min(n, m):
        raise SizeError('rank %s must lie in [1, min(n, m) = %s]'
                        % (r, min(n, m)))
    gen = _gen(seed, 'cc_state')
    U = random_stiefel(n, r, gen)
    V = random_stiefel(m, r, gen)
    f = CCFactorization(U, V, random_simplex(r, gen, EIG_FLOOR / r))
    return DensityMatrix(cc_state(f), n, m), f


def random_density(n, m, rank, seed):
    nm = n * m
    if not 1 <= rank <= nm:
        raise SizeError('rank %s must lie in [1, %s]' % (rank, nm))
    G = _gen(seed, 'density').standard_normal((nm, rank))
    A = G @ G.T
    return DensityMatrix(A / np.trace(A), n, m)


def factor_alignment(found, truth):
    """
    for every true column pair (x_i, y_i): the best |<x_i, x'_j><y_i, y'_j>|
    over the found pairs. 1 means the pair was recovered up to sign
    """
    overlap = np.abs(truth.U.T @ found.U) * np.abs(truth.V.T @ found.V)
    return overlap.max(axis=1)


### quantumness

QuantumnessResult = namedtuple('QuantumnessResult',
                               'q best objective per_restart restarts '
                               'trajectories')

RestartOutcome = namedtuple('RestartOutcome', 'objective reason')


def _run_restart(rho, init, cfg, k):
    try:
        f, traj = integrate(rho, init, cfg)
    except (NumericalError, ValidationError, DegeneracyError) as ex:
        LOGGER.error('restart #%s failed: %s\n%s' % (k, ex, tb.format_exc()))
        return None, None, ex
    return f, traj, None


def quantumness(rho, N=None, restarts=QUANTUMNESS_RESTARTS, cfg=None,
                seed=None, inits=(), method='qr', stream=(), refine=False):
    """
    best classical-classical approximation of rho with at most N terms over
    `restarts` runs of the flow. `inits` seed the first runs; the rest start
    from random factorizations drawn from stream (seed, *stream, 'restart', k).

    with `refine`, a best run that stopped at the horizon is continued from
    its final point for one more horizon and its trajectory chained on
    """
    n, m = rho.dim_a, rho.dim_b
    N = min(n, m) if N is None else N
    if not 1 <= N <= min(n, m):
        raise SizeError('N=%s must lie in [1, min(n, m) = %s]' % (N, min(n, m)))
    if restarts < 1:
        raise ValueError('restarts must be >= 1, got %s' % restarts)
    cfg = cfg or FlowConfig()
    inits = list(inits)

    best, best_k, best_obj = None, None, np.inf
    per_restart, trajectories, errors = [], [], []
    for k in range(restarts):
        init = inits[k] if k < len(inits) else \
            random_factorization(n, m, N, _gen(seed, *stream, 'restart', k),
                                 method)
        f, traj, err = _run_restart(rho, init, cfg, k)
        if err is not None:
            errors.append(err)
            per_restart.append(RestartOutcome(np.nan, 'error: %s' % err))
            trajectories.append(getattr(err, 'trajectory', None))
            continue
        obj = traj.samples[-1].objective
        per_restart.append(RestartOutcome(obj, traj.reason))
        trajectories.append(traj)
        LOGGER.info('restart #%s: objective %.6e (%s, rank %s)'
                    % (k, obj, traj.reason, f.N))
        if obj < best_obj:
            best, best_k, best_obj = f, k, obj

    if best is None:
        raise RestartsFailed(errors)

    if refine and trajectories[best_k].reason == HORIZON:
        f, traj, err = _run_restart(rho, best, cfg, '%s (refine)' % best_k)
        if err is None:
            trajectories[best_k].chain(traj)
            obj = traj.samples[-1].objective
            LOGGER.info('refined restart #%s: objective %.6e -> %.6e (%s)'
                        % (best_k, best_obj, obj, traj.reason))
            per_restart[best_k] = RestartOutcome(obj, traj.reason)
            best, best_obj = f, obj

    q = float(np.sqrt(2. * max(best_obj, 0.)))
    return QuantumnessResult(q=q, best=best, objective=best_obj,
                             per_restart=per_restart, restarts=restarts,
                             trajectories=trajectories)


def consistency(rho, N=None, trials=CONSISTENCY_TRIALS,
                restarts=CONSISTENCY_RESTARTS, cfg=None, seed=None,
                method='qr'):
    """
    `trials` independent estimates of the minimal objective on one target.
    each trial is a refined quantumness run over its own `restarts` starts
    (stream ('trial', k)); returns one QuantumnessResult per trial
    """
    if trials < 1:
        raise ValueError('trials must be >= 1, got %s' % trials)
    results = []
    for k in range(trials):
        res = quantumness(rho, N=N, restarts=restarts, cfg=cfg, seed=seed,
                          method=method, stream=('trial', k), refine=True)
        LOGGER.info('trial #%s: objective %.12e' % (k, res.objective))
        results.append(res)
    return results


### rank sweep

SweepRow = namedtuple('SweepRow', 'n m r best_objective mean_objective '
                                  'restarts reason')


def factor_pairs(D):
    """ordered (n, m) with n, m >= 2 and n*m = D"""
    return [(n, D // n) for n in range(2, D // 2 + 1)
            if D % n == 0 and D // n >= 2]


def extend(f, gen, weight=1e-3):
    """
    add one column pair orthonormal to f's, with weight `weight` taken
    proportionally from the others. f may carry integrator drift; the
    result is orthonormal to construction precision
    """
    def new_column(Y):
        g = gen.standard_normal(Y.shape[0])
        for _ in range(2):
            g = g - Y @ (Y.T @ g)
        return g / np.linalg.norm(g)

    U = reorthonormalize(np.column_stack([f.U, new_column(f.U)]))
    V = reorthonormalize(np.column_stack([f.V, new_column(f.V)]))
    theta = np.append((1. - weight) * f.theta / f.theta.sum(), weight)
    return CCFactorization(U, V, theta)


def rank_sweep(rho, cfg=None, seed=None, restarts=SWEEP_RESTARTS):
    """
    every factorization (n, m) of the dimension of rho and every rank
    r <= min(n, m). rank r+1 gets one run warm-started from the best
    rank-r factorization on top of its `restarts` random ones, so a larger
    rank never does worse. rows record `restarts` and the termination
    reason of the best run, and are sorted by best objective
    """
    value = np.asarray(getattr(rho, 'value', rho), dtype=float)
    D = value.shape[0]
    pairs = factor_pairs(D)
    if not pairs:
        raise UnsupportedDimension('dimension %s has no factorization n*m '
                                   'with n, m >= 2' % D)
    rows = []
    for n, m in pairs:
        target = DensityMatrix(value, n, m)
        prev = None
        for r in range(1, min(n, m) + 1):
            inits = [] if prev is None else \
                [extend(prev, _gen(seed, 'extend', n, m, r))]
            res = quantumness(target, N=r, restarts=restarts + len(inits),
                              cfg=cfg, seed=seed, inits=inits,
                              stream=('sweep', n, m, r))
            objs = np.array([o.objective for o in res.per_restart])
            reason = res.per_restart[int(np.nanargmin(objs))].reason
            rows.append(SweepRow(n, m, r, res.objective,
                                 float(np.nanmean(objs)), restarts, reason))
            LOGGER.info('sweep (n=%s, m=%s, r=%s): best %.6e (%s)'
                        % (n, m, r, res.objective, reason))
            prev = res.best if res.best.N == r else extend_to(res.best, r, seed)
    return sorted(rows, key=lambda row: (row.best_objective, row.n, row.r))


def extend_to(f, r, seed):
    """pad a factorization that lost columns to discards back to rank r"""
    gen = _gen(seed, 'pad', f.n, f.m, r)
    while f.N < r:
        f = extend(f, gen, weight=1e-8)
    return f
