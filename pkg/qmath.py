"""
Dense complex linear algebra shared by the rest of the simulator:
tensor products, partial traces, Hermitian eigendecomposition,
PSD square roots and the fidelity between density matrices.

Matrices are plain numpy arrays of dtype complex. The only wrapper
type is DensityMatrix, which validates its contents once on
construction and is treated as immutable afterwards.

Attributes
----------
HERMITIAN_TOL : float
    Elementwise tolerance for a matrix to count as Hermitian.
EIG_HERMITIAN_TOL : float
    Looser tolerance accepted by herm_eig before it refuses its input.
NEG_EIG_TOL : float
    Eigenvalues in [-NEG_EIG_TOL, 0) are clipped to zero,
    anything more negative is an error.
EIG_FLOOR : float
    Eigenvalues below EIG_FLOOR times the largest one count as zero
    when taking square roots.
"""

import logging
from functools import reduce

import numpy as np

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
EIG_HERMITIAN_TOL = 1e-10
NEG_EIG_TOL = 1e-9
TRACE_TOL = 1e-9
EIG_FLOOR = 1e-14


class QMathError(Exception):
    """Base class for linear algebra errors."""


class InvalidDims(QMathError):
    pass


class NotHermitian(QMathError):
    pass


class InvalidState(QMathError):
    pass


class DensityMatrix:
    """Trace-one positive semidefinite matrix.

    Attributes
    ----------
    mat : np.ndarray
        Complex (dim, dim) array, Hermitian to machine precision.
    dim : int
        Dimension of the Hilbert space.
    """

    def __init__(self, mat, validate=True):
        """
        Parameters
        ----------
        mat : array_like
            Square complex matrix.
        validate : bool
            Check trace, hermiticity and positivity.
            Small negative eigenvalues are clipped
            and the matrix renormalized.
        """
        mat = np.array(mat, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise InvalidDims("density matrix must be square, got shape "
                              + str(mat.shape))

        if validate:
            if not is_hermitian(mat, TRACE_TOL):
                raise InvalidState("density matrix is not Hermitian")
            mat = (mat + mat.conj().T) / 2
            trace = np.trace(mat).real
            if abs(trace - 1) > TRACE_TOL:
                raise InvalidState("density matrix has trace "
                                   + str(trace))
            try:
                mat = clip_psd(mat)
            except QMathError as e:
                raise InvalidState(str(e))

        self.mat = mat
        self.dim = mat.shape[0]

    @classmethod
    def from_ket(cls, psi):
        """
        Build the projector onto a (not necessarily normalized) ket.
        """
        return cls(ket_to_density(psi))

    @classmethod
    def maximally_mixed(cls, dim):
        return cls(np.eye(dim, dtype=complex) / dim)

    def eigenvalues(self):
        return herm_eig(self.mat)[0]

    def __repr__(self):
        return "DensityMatrix(dim=" + str(self.dim) + ")"


def _as_matrix(a):
    if isinstance(a, DensityMatrix):
        return a.mat
    return np.asarray(a, dtype=complex)


def is_hermitian(a, tol=HERMITIAN_TOL):
    a = _as_matrix(a)
    return a.shape[0] == a.shape[1] and np.max(np.abs(a - a.conj().T),
                                               initial=0.0) < tol


def ket_to_density(psi):
    """
    Return |psi><psi| / <psi|psi>.
    """
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    norm = np.vdot(psi, psi).real
    if norm == 0:
        raise InvalidState("cannot normalize the zero vector")
    return np.outer(psi, psi.conj()) / norm


def tensor(a, b):
    """
    Kronecker product with the left factor on the most significant index.
    """
    return np.kron(_as_matrix(a), _as_matrix(b))


def tensor_all(*mats):
    return reduce(tensor, mats)


def herm_eig(a):
    """
    Eigendecomposition of a Hermitian matrix.

    Parameters
    ----------
    a : array_like
        Hermitian matrix (to EIG_HERMITIAN_TOL).

    Return
    ------
    eigenvalues : np.ndarray
        Real eigenvalues in descending order.
    eigenvectors : np.ndarray
        Matrix whose k-th column belongs to the k-th eigenvalue.
    """
    a = _as_matrix(a)
    if not is_hermitian(a, EIG_HERMITIAN_TOL):
        raise NotHermitian("matrix deviates from its adjoint by "
                           + str(np.max(np.abs(a - a.conj().T))))

    values, vectors = np.linalg.eigh((a + a.conj().T) / 2)

    return values[::-1], vectors[:, ::-1]


def clip_psd(a, tol=NEG_EIG_TOL, renormalize=True):
    """
    Remove negative eigenvalues from a Hermitian matrix.

    Parameters
    ----------
    a : array_like
        Hermitian matrix.
    tol : float or None
        Eigenvalues below -tol raise InvalidState.
        With None every negative eigenvalue is clipped,
        which is what estimators want.
    renormalize : bool
        Rescale to unit trace after clipping.

    Return
    ------
    clipped : np.ndarray
    """
    values, vectors = herm_eig(a)
    if tol is not None and values[-1] < -tol:
        raise InvalidState("matrix has eigenvalue " + str(values[-1]))

    if values[-1] >= 0 and not renormalize:
        return _as_matrix(a)

    if values[-1] < 0:
        logger.debug("clipping eigenvalue %.3g", values[-1])
    values = np.clip(values, 0, None)
    clipped = (vectors * values) @ vectors.conj().T

    if renormalize:
        total = np.sum(values)
        if total <= 0:
            raise InvalidState("matrix has no positive part")
        clipped = clipped / total

    return clipped


def psd_roots(values):
    """
    Square roots of the eigenvalues of a PSD matrix.

    Eigenvalues under EIG_FLOOR relative to the largest are rounding
    noise from the null space and map to zero, so rank-deficient
    inputs keep their rank.
    """
    values = np.asarray(values, dtype=float)
    top = np.max(values, initial=0.0)
    kept = np.where(values > EIG_FLOOR * top, values, 0.0)
    return np.sqrt(kept)


def sqrtm_psd(a):
    """
    Square root of a positive semidefinite matrix.
    """
    values, vectors = herm_eig(a)
    if values[-1] < -NEG_EIG_TOL:
        raise InvalidState("square root of a matrix with eigenvalue "
                           + str(values[-1]))
    return (vectors * psd_roots(values)) @ vectors.conj().T


def partial_trace_matrix(mat, dims, keep):
    """
    Partial trace of a plain (possibly unnormalized) matrix.
    Kept subsystems come out in ascending order.
    """
    mat = np.asarray(mat, dtype=complex)
    dims = [int(d) for d in dims]
    if any(d < 1 for d in dims) or int(np.prod(dims)) != mat.shape[0]:
        raise InvalidDims("subsystem dims " + str(dims)
                          + " do not multiply to " + str(mat.shape[0]))
    keep = sorted(set(keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise InvalidDims("keep indices " + str(keep) + " out of range")

    n = len(dims)
    ket = list(range(n))
    bra = [i + n if i in keep else i for i in range(n)]
    out = [i for i in keep] + [i + n for i in keep]

    reduced = np.einsum(mat.reshape(dims + dims), ket + bra, out)
    kept_dim = int(np.prod([dims[i] for i in keep]))

    return reduced.reshape(kept_dim, kept_dim)


def partial_trace(rho, dims, keep):
    """
    Reduced density matrix on the kept subsystems.

    Parameters
    ----------
    rho : DensityMatrix
    dims : [int]
        Dimensions of the subsystems, most significant first.
    keep : {int}
        Indices of the subsystems to keep, in any order.
        The result keeps them in ascending order.

    Return
    ------
    reduced : DensityMatrix
    """
    mat = _as_matrix(rho)
    return DensityMatrix(partial_trace_matrix(mat, dims, keep))


def uhlmann_fidelity(rho, sigma):
    """
    Fidelity F = (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.

    This is the squared convention, so that F equals <psi|sigma|psi>
    whenever rho = |psi><psi|.
    """
    a = _as_matrix(rho)
    b = _as_matrix(sigma)
    if a.shape != b.shape:
        raise InvalidDims("fidelity between shapes " + str(a.shape)
                          + " and " + str(b.shape))

    root = sqrtm_psd(a)
    inner = root @ b @ root
    values = herm_eig((inner + inner.conj().T) / 2)[0]
    fidelity = np.sum(psd_roots(values)) ** 2

    return float(min(max(fidelity, 0.0), 1.0))


def trace_distance(rho, sigma):
    diff = _as_matrix(rho) - _as_matrix(sigma)
    values = herm_eig((diff + diff.conj().T) / 2)[0]
    return float(np.sum(np.abs(values)) / 2)
