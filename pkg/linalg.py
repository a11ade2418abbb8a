"""
dense kernels for the Khatri-Rao algebra of classical-classical states

vec / reshape follow the column-stacking convention throughout: entry
k*rows + i of vec(A) is A[i, k]
"""

import numpy as np


class SizeError(ValueError):
    pass


### construction

def as_matrix(A, name='matrix'):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise SizeError('%s must be 2-d, got shape %s' % (name, A.shape))
    if not np.all(np.isfinite(A)):
        raise ValueError('%s has non-finite entries' % name)
    return A


def as_vector(v, name='vector'):
    v = np.asarray(v, dtype=float)
    if v.ndim == 2 and 1 in v.shape:
        v = v.ravel()
    if v.ndim != 1:
        raise SizeError('%s must be 1-d, got shape %s' % (name, v.shape))
    if not np.all(np.isfinite(v)):
        raise ValueError('%s has non-finite entries' % name)
    return v


def _same_shape(A, B, what):
    if A.shape != B.shape:
        raise SizeError('%s: shape mismatch %s vs %s' % (what, A.shape, B.shape))


### vectorization

def vec(A):
    return np.asarray(A, dtype=float).ravel(order='F')


def reshape(v, rows, cols):
    v = np.asarray(v, dtype=float).ravel()
    if v.size != rows * cols:
        raise SizeError('cannot reshape length %s into %sx%s'
                        % (v.size, rows, cols))
    return v.reshape((rows, cols), order='F')


### products

def kron(a, b):
    return np.kron(np.asarray(a, dtype=float).ravel(),
                   np.asarray(b, dtype=float).ravel())


def khatri_rao(U, V):
    """column i of the result is kron(U[:, i], V[:, i])"""
    U, V = np.asarray(U, dtype=float), np.asarray(V, dtype=float)
    if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
        raise SizeError('khatri_rao: column mismatch %s vs %s'
                        % (U.shape, V.shape))
    n, N = U.shape
    m = V.shape[0]
    return np.einsum('in,jn->ijn', U, V).reshape(n * m, N)


def skew(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise SizeError('skew: expected a square matrix, got %s' % (A.shape,))
    return .5 * (A - A.T)


def frobenius_inner(A, B):
    A, B = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    _same_shape(A, B, 'frobenius_inner')
    return float(np.vdot(A, B))


### M and N operators

# vec(X ⊙ V) = M vec(X) with M = blockdiag_i(I_n ⊗ v_i) and
# vec(U ⊙ Y) = N vec(Y) with N = blockdiag_i(u_i ⊗ I_m)

def _segments(w, n, m, N):
    w = np.asarray(w, dtype=float).ravel()
    if w.size != n * m * N:
        raise SizeError('expected length %s (= %s*%s*%s), got %s'
                        % (n * m * N, n, m, N, w.size))
    # [i, j, k] = entry j*m + k of the i-th nm-segment
    return w.reshape(N, n, m)


def apply_M_transpose(V, w, n=None):
    """M^T w without forming M; `n` defaults to len(w) / (m*N)"""
    V = np.asarray(V, dtype=float)
    m, N = V.shape
    if n is None:
        n, rem = divmod(np.size(w), m * N)
        if rem or not n:
            raise SizeError('length %s is not a multiple of m*N = %s'
                            % (np.size(w), m * N))
    W = _segments(w, n, m, N)
    return vec(np.einsum('ijk,ki->ji', W, V))


def apply_N_transpose(U, w, m=None):
    U = np.asarray(U, dtype=float)
    n, N = U.shape
    if m is None:
        m, rem = divmod(np.size(w), n * N)
        if rem or not m:
            raise SizeError('length %s is not a multiple of n*N = %s'
                            % (np.size(w), n * N))
    W = _segments(w, n, m, N)
    return vec(np.einsum('ijk,ji->ki', W, U))


def build_M_explicit(V, n):
    V = np.asarray(V, dtype=float)
    m, N = V.shape
    M = np.zeros((n * m * N, n * N))
    eye = np.eye(n)
    for i in range(N):
        M[i*n*m:(i+1)*n*m, i*n:(i+1)*n] = np.kron(eye, V[:, [i]])
    return M


def build_N_explicit(U, m):
    U = np.asarray(U, dtype=float)
    n, N = U.shape
    Nmat = np.zeros((n * m * N, m * N))
    eye = np.eye(m)
    for i in range(N):
        Nmat[i*n*m:(i+1)*n*m, i*m:(i+1)*m] = np.kron(U[:, [i]], eye)
    return Nmat
