"""
F(U, V, theta) = 1/2 |rho - (U⊙V) diag(theta) (U⊙V)^T|_F^2 and its derivatives

Euclidean partials (orthonormal columns of U⊙V assumed):

    dF/dU       = -2 (Mt - Mh),  Mt = reshape(M^T vec(rho K S)),  Mh = reshape(M^T vec(K S^2))
    dF/dV       = -2 (Nt - Nh),  likewise through N
    dF/dtheta_i = e_i = theta_i - z_i^T rho z_i,  z_i = x_i ⊗ y_i

with K = U⊙V and S = diag(theta).
"""

from collections import namedtuple

import numpy as np

import linalg as la
from linalg import SizeError
from stiefel import StiefelPoint, ortho_residual, riemannian_gradient
from utils import get_logger


LOGGER = get_logger(__name__)

ORTHO_TOL = 1e-12
SUM_TOL = 1e-10


class ValidationError(ValueError):
    def __init__(self, invariant, value, msg=None):
        self.invariant = invariant
        self.value = value
        super().__init__(msg or '%s violated (value %.6g)' % (invariant, value))


### factorization

def _read_only(A):
    A = np.array(A, dtype=float)
    A.setflags(write=False)
    return A


class CCFactorization(object):
    """
    candidate classical-classical state (U⊙V) diag(theta) (U⊙V)^T.

    U (n x N) and V (m x N) are stored as plain read-only arrays; the
    Stiefel and simplex invariants are checked at `ortho_tol` / `sum_tol`
    unless validate=False (finite-difference steps leave the manifold)
    """

    def __init__(self, U, V, theta, ortho_tol=ORTHO_TOL, sum_tol=SUM_TOL,
                 validate=True):
        U = la.as_matrix(U.value if isinstance(U, StiefelPoint) else U, 'U')
        V = la.as_matrix(V.value if isinstance(V, StiefelPoint) else V, 'V')
        theta = la.as_vector(theta, 'theta')
        if not (U.shape[1] == V.shape[1] == theta.size):
            raise SizeError('column counts differ: U %s, V %s, theta %s'
                            % (U.shape, V.shape, theta.shape))
        self.U, self.V, self.theta = _read_only(U), _read_only(V), _read_only(theta)
        if validate:
            self.validate(ortho_tol, sum_tol)

    @property
    def n(self):
        return self.U.shape[0]

    @property
    def m(self):
        return self.V.shape[0]

    @property
    def N(self):
        return self.theta.size

    @property
    def dims(self):
        return self.n, self.m, self.N

    def validate(self, ortho_tol=ORTHO_TOL, sum_tol=SUM_TOL):
        if self.n < self.N or self.m < self.N:
            raise SizeError('rank N=%s exceeds min(n, m) = %s'
                            % (self.N, min(self.n, self.m)))
        for name, Y in ('U', self.U), ('V', self.V):
            res = ortho_residual(Y)
            if res > ortho_tol:
                raise ValidationError(
                    'orthonormality of %s' % name, res,
                    '|%s^T %s - I|_F = %.3e exceeds %.1e'
                    % (name, name, res, ortho_tol))
        lo = self.theta.min()
        if lo <= 0. or self.theta.max() > 1.:
            bad = lo if lo <= 0. else self.theta.max()
            raise ValidationError('theta in (0, 1]', bad,
                                  'theta entry %.6g outside (0, 1]' % bad)
        err = abs(self.theta.sum() - 1.)
        if err > sum_tol:
            raise ValidationError('sum(theta) = 1', self.theta.sum(),
                                  '|sum(theta) - 1| = %.3e exceeds %.1e'
                                  % (err, sum_tol))
        return self

    def khatri_rao(self):
        return la.khatri_rao(self.U, self.V)

    def permuted(self, order):
        order = np.asarray(order)
        return CCFactorization(self.U[:, order], self.V[:, order],
                               self.theta[order], validate=False)

    def __repr__(self):
        return 'CCFactorization(n=%s, m=%s, N=%s)' % self.dims


GradientBundle = namedtuple('GradientBundle', 'dU dV dTheta value')


def _rho(rho, f):
    R = np.asarray(getattr(rho, 'value', rho), dtype=float)
    nm = f.n * f.m
    if R.shape != (nm, nm):
        raise SizeError('rho is %s but the factorization needs %sx%s'
                        % (R.shape, nm, nm))
    return R


### value

def cc_state(f):
    K = f.khatri_rao()
    return (K * f.theta) @ K.T


def objective_value(rho, f):
    R = _rho(rho, f)
    D = R - cc_state(f)
    return .5 * la.frobenius_inner(D, D)


def quadratic_forms(rho, f):
    """z_i^T rho z_i for z_i = x_i ⊗ y_i"""
    R = _rho(rho, f)
    K = f.khatri_rao()
    return np.einsum('ai,ab,bi->i', K, R, K)


def theta_partial_full(rho, f):
    """
    dF/dtheta_i without assuming the z_i orthonormal:
    sum_j theta_j (z_i^T z_j)^2 - z_i^T rho z_i
    """
    K = f.khatri_rao()
    gram = K.T @ K
    return (gram ** 2) @ f.theta - quadratic_forms(rho, f)


### partials

_Partials = namedtuple('_Partials', 'Mt Mh Nt Nh e value')


def _partials(rho, f, explicit=False):
    R = _rho(rho, f)
    n, m, N = f.dims
    K = f.khatri_rao()
    KS = K * f.theta
    RKS = R @ KS
    KS2 = K * f.theta ** 2

    if explicit:
        M, Nmat = la.build_M_explicit(f.V, n), la.build_N_explicit(f.U, m)
        MT = lambda w: M.T @ w
        NT = lambda w: Nmat.T @ w
    else:
        MT = lambda w: la.apply_M_transpose(f.V, w, n)
        NT = lambda w: la.apply_N_transpose(f.U, w, m)

    Mt = la.reshape(MT(la.vec(RKS)), n, N)
    Mh = la.reshape(MT(la.vec(KS2)), n, N)
    Nt = la.reshape(NT(la.vec(RKS)), m, N)
    Nh = la.reshape(NT(la.vec(KS2)), m, N)

    e = f.theta - np.einsum('ai,ai->i', K, R @ K)

    D = R - KS @ K.T
    value = .5 * la.frobenius_inner(D, D)
    return _Partials(Mt, Mh, Nt, Nh, e, value)


def gradient(rho, f, explicit=False):
    p = _partials(rho, f, explicit)
    return GradientBundle(dU=-2. * (p.Mt - p.Mh),
                          dV=-2. * (p.Nt - p.Nh),
                          dTheta=p.e,
                          value=p.value)


def riemannian_bundle(rho, f):
    """
    ascent directions: canonical-metric gradients for U and V, the
    mean-centered residuals e - mean(e) for theta. descent negates all three
    """
    g = gradient(rho, f)
    return GradientBundle(dU=riemannian_gradient(g.dU, f.U),
                          dV=riemannian_gradient(g.dV, f.V),
                          dTheta=g.dTheta - g.dTheta.mean(),
                          value=g.value)


def stationarity_residual(rho, f):
    p = _partials(rho, f)
    DU, DV = p.Mt - p.Mh, p.Nt - p.Nh
    ru = np.linalg.norm(f.U.T @ DU - DU.T @ f.U)
    rv = np.linalg.norm(f.V.T @ DV - DV.T @ f.V)
    rt = np.linalg.norm(p.e - p.e.mean())
    return float(max(ru, rv, rt))
