"""
geometry of the Stiefel manifold S_{p,N} = {Y in R^{p x N} | Y^T Y = I}
under the canonical metric
"""

import numpy as np
import scipy.linalg as sla

from linalg import SizeError, as_matrix, skew
from utils import get_logger


LOGGER = get_logger(__name__)

CONSTRUCTION_TOL = 1e-12


class DegeneracyError(ValueError):
    pass


def ortho_residual(Y):
    Y = np.asarray(Y, dtype=float)
    return float(np.linalg.norm(Y.T @ Y - np.eye(Y.shape[1])))


class StiefelPoint(object):
    """
    p x N matrix with orthonormal columns; `value` is read-only
    """

    __slots__ = ('value',)

    def __init__(self, value, tol=CONSTRUCTION_TOL):
        Y = as_matrix(value, 'stiefel point')
        p, N = Y.shape
        if p < N:
            raise SizeError('stiefel point needs p >= N, got %sx%s' % (p, N))
        res = ortho_residual(Y)
        if res > tol:
            raise DegeneracyError('columns not orthonormal: '
                                  '|Y^T Y - I|_F = %.3e > %.1e' % (res, tol))
        Y = Y.copy()
        Y.setflags(write=False)
        object.__setattr__(self, 'value', Y)

    def __setattr__(self, key, val):
        raise AttributeError('StiefelPoint is immutable')

    @property
    def shape(self):
        return self.value.shape

    def __array__(self, dtype=None, copy=None):
        return self.value if dtype is None else self.value.astype(dtype)

    def __repr__(self):
        return 'StiefelPoint(%sx%s)' % self.shape


def _value(Y):
    return Y.value if isinstance(Y, StiefelPoint) else np.asarray(Y, dtype=float)


### random points

def random_stiefel(p, N, rng, method='qr'):
    """
    orthonormalize a p x N standard normal matrix drawn from `rng`.

    method='qr' fixes the sign of diag(R) to be nonnegative, which makes the
    result Haar distributed; method='svd' keeps the left singular factor
    """
    if N < 1 or p < N:
        raise SizeError('random_stiefel needs p >= N >= 1, got p=%s N=%s'
                        % (p, N))
    G = rng.standard_normal((p, N))
    if method == 'qr':
        Q, R = sla.qr(G, mode='economic')
        signs = np.where(np.diag(R) < 0, -1., 1.)
        Q = Q * signs
    elif method == 'svd':
        Q, _, _ = sla.svd(G, full_matrices=False)
    else:
        raise ValueError('unknown method %r (qr|svd)' % method)
    return StiefelPoint(Q)


### tangent space

def riemannian_gradient(euclidean_grad, Y):
    """2 skew(G Y^T) Y: projection of G onto the tangent space at Y"""
    Y = _value(Y)
    G = np.asarray(euclidean_grad, dtype=float)
    if G.shape != Y.shape:
        raise SizeError('gradient shape %s does not match point %s'
                        % (G.shape, Y.shape))
    return 2. * skew(G @ Y.T) @ Y


def tangency_residual(X, Y):
    Y = _value(Y)
    X = np.asarray(X, dtype=float)
    if X.shape != Y.shape:
        raise SizeError('tangent shape %s does not match point %s'
                        % (X.shape, Y.shape))
    XtY = X.T @ Y
    return float(np.linalg.norm(XtY + XtY.T))


### drift repair

def reorthonormalize(Y, rcond=1e-12):
    """
    polar factor of Y, the Frobenius-nearest matrix with orthonormal columns
    """
    Y = as_matrix(_value(Y), 'matrix')
    p, N = Y.shape
    if p < N:
        raise SizeError('cannot orthonormalize %sx%s columns' % (p, N))
    if ortho_residual(Y) <= CONSTRUCTION_TOL:
        return StiefelPoint(Y)
    s = np.linalg.svd(Y, compute_uv=False)
    if s[-1] <= rcond * max(s[0], 1.):
        raise DegeneracyError('rank-deficient matrix, sigma_min/sigma_max = %.3e'
                              % (s[-1] / s[0] if s[0] else 0.))
    W, _ = sla.polar(Y, side='right')
    return StiefelPoint(W)
