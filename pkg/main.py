#!/usr/bin/env python3
"""
nearest classical-classical state experiments

    python main.py decompose   --n 16 --m 8 --rank 3 --init-rank 8 --seed 1
    python main.py consistency --n 8 --m 5 --target-rank full --trials 10
    python main.py ranksweep   --dim 60 --restarts 5
    python main.py quantify    --input rho.csv --n 16 --m 8 --N 8

every run writes its artifacts plus manifest.json and log.log to --out
"""

import sys
import time
import os.path as osp

import numpy as np

import export
from flow import HORIZON, STATIONARITY, FlowConfig, NumericalError, integrate
from linalg import SizeError
from objective import ValidationError
from states import (
    DensityMatrix,
    RestartsFailed,
    UnsupportedDimension,
    check_density,
    consistency,
    factor_alignment,
    quantumness,
    random_cc_state,
    random_density,
    random_factorization,
    rank_sweep,
)
from stiefel import DegeneracyError
from utils import (
    UsageError,
    arg,
    close_logging,
    get_logger,
    init_logging,
    is_,
    mkdir_p,
    parse_commands,
    resolve_seed,
    rng,
    time_stamp,
)


__version__ = '0.1.0'

LOGGER = get_logger(__name__, main=True)

EXIT_OK, EXIT_ERROR, EXIT_HORIZON, EXIT_USAGE = 0, 1, 2, 64


### flags

COMMON = [
    arg('--seed', type=int,
        help='master seed (falls back to $QN_SEED)'),
    arg('--out', help='output directory (default results/<command>_<time>)'),
    arg('--quiet', action='store_true', help='log to file only'),

    # flow config overrides
    arg('--abs-tol',     type=float),
    arg('--rel-tol',     type=float),
    arg('--t-max',       type=float),
    arg('--grad-tol',    type=float),
    arg('--discard-eps', type=float),
    arg('--drift-tol',   type=float),
    arg('--max-step',    type=float),
    arg('--record-stride', type=int),
]

INIT = arg('--init', choices=('qr', 'svd'), default='qr',
           help='orthonormalization of the random initial factors')


def target_rank(s):
    return s if s == 'full' else int(s)


COMMANDS = {
    'decompose': ('recover a synthetic classical-classical state', [
        arg('--n',         type=int, default=16),
        arg('--m',         type=int, default=8),
        arg('--rank',      type=int, default=3),
        arg('--init-rank', type=int, default=8),
        INIT,
    ]),
    'consistency': ('repeat the minimization on one random target', [
        arg('--n',           type=int, default=8),
        arg('--m',           type=int, default=5),
        arg('--N',           type=int),
        arg('--target-rank', type=target_rank, default='full'),
        arg('--trials',      type=int, default=10),
        arg('--restarts',    type=int, default=5,
            help='random starts per trial'),
        INIT,
    ]),
    'ranksweep': ('objective over every (n, m, r) of a dimension', [
        arg('--dim',      type=int, default=60),
        arg('--input',    help='density matrix file (default: random target)'),
        arg('--restarts', type=int, default=5),
    ]),
    'quantify': ('distance of a given state to the classical-classical set', [
        arg('--input',    required=True),
        arg('--n',        type=int),
        arg('--m',        type=int),
        arg('--N',        type=int),
        arg('--restarts', type=int, default=10),
        arg('--sym-tol',   type=float, default=1e-12),
        arg('--psd-tol',   type=float, default=1e-10),
        arg('--trace-tol', type=float, default=1e-12),
        INIT,
    ]),
}


def flow_config(opts):
    return FlowConfig().replace(abs_tol=opts.abs_tol,
                                rel_tol=opts.rel_tol,
                                t_max=opts.t_max,
                                grad_tol=opts.grad_tol,
                                discard_eps=opts.discard_eps,
                                drift_tol=opts.drift_tol,
                                max_step=opts.max_step,
                                record_stride=opts.record_stride).validate()


def exit_code(reasons):
    if all(r == STATIONARITY for r in reasons):
        return EXIT_OK
    if all(r in (STATIONARITY, HORIZON) for r in reasons):
        return EXIT_HORIZON
    return EXIT_ERROR


### commands

def cmd_decompose(opts, cfg, seed):
    if opts.rank > opts.init_rank:
        raise UsageError('--rank %s exceeds --init-rank %s'
                         % (opts.rank, opts.init_rank))
    rho, truth = random_cc_state(opts.n, opts.m, opts.rank,
                                 rng(seed, 'target'))
    init = random_factorization(opts.n, opts.m, opts.init_rank,
                                rng(seed, 'init'), opts.init)
    f, traj = integrate(rho, init, cfg)

    export.write_trajectory(traj, osp.join(opts.out, 'trajectory.csv'))
    export.write_events(traj, osp.join(opts.out, 'events.csv'))
    final = traj.samples[-1].objective
    export.write_factorization(f, osp.join(opts.out, 'factorization.json'),
                               objective=final)

    align = factor_alignment(f, truth)
    print('final objective: %.6e' % final)
    print('surviving rank:  %s (true rank %s)' % (f.N, opts.rank))
    print('discards:        %s' % len(traj.discards()))
    print('termination:     %s at t=%.6g' % (traj.reason, traj.t))
    print('factor alignment: %s' % np.array2string(align, precision=6))
    return (opts.n, opts.m, opts.init_rank), [traj.reason]


def _best_reason(res):
    objs = [o.objective for o in res.per_restart]
    return res.per_restart[int(np.nanargmin(objs))].reason


def cmd_consistency(opts, cfg, seed):
    n, m = opts.n, opts.m
    rank = n * m if opts.target_rank == 'full' else opts.target_rank
    rho = random_density(n, m, rank, rng(seed, 'target'))
    N = opts.N or min(n, m)
    results = consistency(rho, N=N, trials=opts.trials,
                          restarts=opts.restarts, cfg=cfg, seed=seed,
                          method=opts.init)

    export.write_trials(results, osp.join(opts.out, 'trials.csv'))

    finals = np.array([res.objective for res in results])
    mean = float(finals.mean())
    std = float(finals.std(ddof=1)) if finals.size > 1 else 0.
    trajs = [t for res in results for t in res.trajectories if t is not None]
    max_sum = max(t.max_sum_error() for t in trajs)
    descending = [t.is_descending(cfg.abs_tol, cfg.rel_tol) for t in trajs]
    export.dump_json({'trials': opts.trials,
                      'restarts': opts.restarts,
                      'target_rank': rank,
                      'N': N,
                      'final_objectives': finals.tolist(),
                      'mean': mean,
                      'std': std,
                      'relative_std': std / mean if mean else 0.,
                      'max_sum_error': max_sum,
                      'all_descending': all(descending)},
                     osp.join(opts.out, 'summary.json'))

    print('final objective mean: %.6e' % mean)
    print('final objective std:  %.6e (relative %.3e)'
          % (std, std / mean if mean else 0.))
    print('max |sum(theta) - 1|: %.3e' % max_sum)
    return (n, m, N), [_best_reason(res) for res in results]


def _load_target(path, n, m, tols=None):
    A, fn, fm = export.read_matrix(path)
    n, m = n or fn, m or fm
    if not (is_(n) and is_(m)):
        raise UsageError('--n and --m are required for %s' % path)
    if A.shape != (n * m, n * m):
        raise SizeError('%s holds a %sx%s matrix, n*m = %s'
                        % (path, A.shape[0], A.shape[1], n * m))
    tols = tols or {}
    failed = None
    for c in check_density(A, **tols):
        LOGGER.info('input check %-10s value %.12g tolerance %.1e %s'
                    % (c.invariant, c.value, c.tol, 'ok' if c.ok else 'FAIL'))
        if not c.ok and failed is None:
            failed = c
    if failed is not None:
        raise ValidationError(failed.invariant, failed.value,
                              'input %s: %s invariant violated, value %.12g '
                              '(tolerance %.1e)' % (path, failed.invariant,
                                                    failed.value, failed.tol))
    return DensityMatrix(A, n, m, **tols)


def cmd_ranksweep(opts, cfg, seed):
    if is_(opts.input):
        value, _, _ = export.read_matrix(opts.input)
        D = value.shape[0]
        rho = _load_target(opts.input, D, 1)
    else:
        D = opts.dim
        rho = random_density(D, 1, D, rng(seed, 'target'))
    rows = rank_sweep(rho, cfg=cfg, seed=seed, restarts=opts.restarts)
    export.write_sweep(rows, osp.join(opts.out, 'sweep.csv'))
    best = rows[0]
    print('best: n=%s m=%s r=%s objective %.6e'
          % (best.n, best.m, best.r, best.best_objective))
    return (D,), [row.reason for row in rows]


def cmd_quantify(opts, cfg, seed):
    tols = dict(sym_tol=opts.sym_tol, psd_tol=opts.psd_tol,
                trace_tol=opts.trace_tol)
    rho = _load_target(opts.input, opts.n, opts.m, tols)
    res = quantumness(rho, N=opts.N, restarts=opts.restarts, cfg=cfg,
                      seed=seed, method=opts.init)
    export.write_factorization(res.best,
                               osp.join(opts.out, 'factorization.json'),
                               q=res.q, objective=res.objective)
    print('q = %.6e (objective %.6e, rank %s, best of %s)'
          % (res.q, res.objective, res.best.N, res.restarts))
    # the best run decides the exit code
    return (rho.dim_a, rho.dim_b, res.best.N), [_best_reason(res)]


RUNNERS = {
    'decompose': cmd_decompose,
    'consistency': cmd_consistency,
    'ranksweep': cmd_ranksweep,
    'quantify': cmd_quantify,
}


### entry point

def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        opts = parse_commands(COMMANDS, COMMON, argv, prog='main.py')
        cfg = flow_config(opts)
        seed = resolve_seed(opts.seed)
    except (UsageError, ValueError) as ex:
        print('usage error: %s' % ex, file=sys.stderr)
        return EXIT_USAGE

    opts.out = opts.out or osp.join('results', '%s_%s'
                                    % (opts.command, time_stamp()))
    mkdir_p(opts.out)
    fh = init_logging(file=osp.join(opts.out, 'log.log'),
                      stdout=not opts.quiet)
    LOGGER.info('+++ %s seed=%s out=%s +++' % (opts.command, seed, opts.out))

    start = time.time()
    try:
        dims, reasons = RUNNERS[opts.command](opts, cfg, seed)
        code = exit_code(reasons)
    except UsageError as ex:
        LOGGER.error('usage error: %s' % ex)
        print('usage error: %s' % ex, file=sys.stderr)
        dims, code = None, EXIT_USAGE
    except (SizeError, ValidationError, DegeneracyError, NumericalError,
            UnsupportedDimension, RestartsFailed, OSError) as ex:
        LOGGER.error('%s: %s' % (type(ex).__name__, ex))
        print('error: %s' % ex, file=sys.stderr)
        dims, code = None, EXIT_ERROR

    manifest = export.RunManifest(command=opts.command,
                                  seed=seed,
                                  config=cfg.as_dict(),
                                  dims=dims,
                                  version=__version__,
                                  wall_time=time.time() - start,
                                  argv=argv)
    export.write_manifest(manifest, opts.out)
    LOGGER.info('--- %s done, exit %s (%.1fs) ---'
                % (opts.command, code, manifest.wall_time))
    close_logging(fh)
    return code


if __name__ == '__main__':
    sys.exit(main())
