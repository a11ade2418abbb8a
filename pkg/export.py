"""
run artifacts: trajectory / event / sweep / trial CSVs, the run manifest,
factorizations, and density-matrix input files
"""

import os.path as osp

from collections import namedtuple

import numpy as np
import pandas as pd
import ujson as json

from linalg import SizeError
from utils import get_logger


LOGGER = get_logger(__name__)

FLOAT_FMT = '%.17g'
JSON_PRECISION = 15

TRAJECTORY_COLUMNS = ['t', 'objective', 'theta_sum', 'grad_norm',
                      'ortho_u', 'ortho_v']
EVENT_COLUMNS = ['t', 'kind', 'detail']
SWEEP_COLUMNS = ['n', 'm', 'r', 'best_objective', 'mean_objective',
                 'restarts']
TRIAL_COLUMNS = ['trial', 'restart', 't', 'objective', 'theta_sum']


RunManifest = namedtuple('RunManifest', 'command seed config dims version '
                                        'wall_time argv')


def _to_csv(df, path):
    df.to_csv(path, index=False, float_format=FLOAT_FMT, na_rep='')
    LOGGER.info('wrote %s (%s rows)' % (path, len(df)))


### trajectories

def trajectory_frame(traj):
    theta_cols = ['theta_%s' % (i + 1) for i in range(traj.n_columns)]
    rows = [[s.t, s.objective, s.theta_sum, s.grad_norm, s.ortho_u, s.ortho_v]
            + list(s.theta) for s in traj.samples]
    return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS + theta_cols)


def write_trajectory(traj, path):
    _to_csv(trajectory_frame(traj), path)


def write_events(traj, path):
    df = pd.DataFrame([list(e) for e in traj.events], columns=EVENT_COLUMNS)
    _to_csv(df, path)


def write_trials(results, path):
    """one row per recorded sample of every run of every trial"""
    rows = [[k, j, s.t, s.objective, s.theta_sum]
            for k, res in enumerate(results)
            for j, traj in enumerate(res.trajectories) if traj is not None
            for s in traj.samples]
    _to_csv(pd.DataFrame(rows, columns=TRIAL_COLUMNS), path)


def write_sweep(rows, path):
    df = pd.DataFrame([r._asdict() for r in rows], columns=SWEEP_COLUMNS)
    _to_csv(df, path)


def read_sweep(path):
    return pd.read_csv(path)


### json

def dump_json(obj, path):
    with open(path, 'w') as io:
        json.dump(obj, io, indent=2, double_precision=JSON_PRECISION)
    LOGGER.info('wrote %s' % path)


def load_json(path):
    with open(path) as io:
        return json.load(io)


def write_manifest(manifest, out_dir):
    dump_json(dict(manifest._asdict()), osp.join(out_dir, 'manifest.json'))


def factorization_dict(f, **extra):
    d = {'n': f.n, 'm': f.m, 'N': f.N,
         'U': f.U.tolist(), 'V': f.V.tolist(), 'theta': f.theta.tolist()}
    d.update(extra)
    return d


def write_factorization(f, path, **extra):
    dump_json(factorization_dict(f, **extra), path)


### density input

def read_matrix(path):
    """
    dense matrix from a CSV (one row per line, no header) or a JSON wrapper
    {"n": .., "m": .., "data": [[..], ..]}. returns (matrix, n, m) with
    n, m None for CSV
    """
    if path.lower().endswith('.json'):
        d = load_json(path)
        try:
            return np.array(d['data'], dtype=float), d.get('n'), d.get('m')
        except KeyError:
            raise SizeError('%s: JSON input needs a "data" field' % path)
    A = pd.read_csv(path, header=None).to_numpy(dtype=float)
    return A, None, None


def write_matrix(A, path, n=None, m=None):
    A = np.asarray(A, dtype=float)
    if path.lower().endswith('.json'):
        dump_json({'n': n, 'm': m, 'data': A.tolist()}, path)
    else:
        pd.DataFrame(A).to_csv(path, index=False, header=False,
                               float_format=FLOAT_FMT)
        LOGGER.info('wrote %s' % path)
