"""
Two-qubit polarization tomography: projective settings, simulated
counting, maximum-likelihood reconstruction, process matrices in the
Pauli basis and the usual entanglement measures.

The measured qubits are ordered (A, B). Each qubit is projected onto
one of the six eigenstates H, V, D, A, R, L, giving 36 settings.
"""

import csv
import logging
import math
from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.linalg
from scipy.special import entr, xlogy

import polarization as pol
from qmath import (DensityMatrix, InvalidState, clip_psd, herm_eig,
                   is_hermitian, ket_to_density, psd_roots, sqrtm_psd,
                   uhlmann_fidelity)

logger = logging.getLogger(__name__)

LETTERS = ("H", "V", "D", "A", "R", "L")
BASIS_OF = {"H": "Z", "V": "Z", "D": "X", "A": "X", "R": "Y", "L": "Y"}

PROB_FLOOR = 1e-12
MLE_TOL = 1e-10
MLE_MAX_ITER = 10000
N_BOOT = 250

PAULI_LABELS = ("I", "X", "Y", "Z")
PAULIS = [pol.pauli_matrix(p) for p in PAULI_LABELS]

PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)


class TomographyError(Exception):
    """Base class for estimation errors."""


class NotInformationallyComplete(TomographyError):
    pass


@dataclass(frozen=True, order=True)
class TomoSetting:
    """Pair of single-qubit projections, one per party."""

    basis_a: str
    basis_b: str

    def __post_init__(self):
        for name in ("basis_a", "basis_b"):
            if getattr(self, name) not in LETTERS:
                raise ValueError(name + " must be one of " + str(LETTERS)
                                 + ", got " + repr(getattr(self, name)))

    def __str__(self):
        return self.basis_a + self.basis_b

    @property
    def basis_pair(self):
        return BASIS_OF[self.basis_a] + BASIS_OF[self.basis_b]


ALL_SETTINGS = tuple(TomoSetting(a, b) for a, b in product(LETTERS, LETTERS))


@dataclass(frozen=True)
class CountRecord:
    """Coincidences recorded for one setting out of `total` trials."""

    setting: TomoSetting
    counts: int
    total: int

    def __post_init__(self):
        if self.counts < 0 or self.total < 0:
            raise ValueError("counts and total must be nonnegative, got "
                             + str((self.counts, self.total)))
        if self.counts > self.total:
            raise ValueError("counts " + str(self.counts)
                             + " exceed total " + str(self.total))


class ChiMatrix:
    """Process matrix in the Pauli basis {I, X, Y, Z}.

    E(rho) = sum_mn chi[m, n] P_m rho P_n.
    """

    def __init__(self, mat):
        mat = np.array(mat, dtype=complex)
        if mat.shape != (4, 4):
            raise ValueError("chi matrix must be 4x4")
        if not is_hermitian(mat, 1e-9):
            raise InvalidState("chi matrix is not Hermitian")
        self.mat = (mat + mat.conj().T) / 2

    def __getitem__(self, labels):
        m, n = labels
        return self.mat[PAULI_LABELS.index(m), PAULI_LABELS.index(n)]

    def dominant(self):
        """
        Pauli label and value of the largest diagonal element.
        """
        diag = np.real(np.diag(self.mat))
        k = int(np.argmax(diag))
        return PAULI_LABELS[k], float(diag[k])


def polarization_ket(letter):
    return pol.POLARIZATION_KETS[letter].copy()


def projector(s):
    """
    Return |a b><a b| for the setting s.
    """
    ket = np.kron(polarization_ket(s.basis_a), polarization_ket(s.basis_b))
    return np.outer(ket, ket.conj())


def _projector_stack(settings):
    return np.array([projector(s) for s in settings])


def exact_probabilities(rho, settings=ALL_SETTINGS):
    """
    Tr(Pi_s rho) for every setting.
    """
    mat = rho.mat if isinstance(rho, DensityMatrix) else np.asarray(rho)
    stack = _projector_stack(settings)
    values = np.einsum("jab,ba->j", stack, mat).real
    return {s: float(min(max(v, 0.0), 1.0)) for s, v in zip(settings, values)}


def conditional_probabilities(click_table):
    """
    Normalize coincidence probabilities within each basis pair, so the
    four outcomes of e.g. (X, Z) add up to one.

    Parameters
    ----------
    click_table : dict(float)
        Maps TomoSetting to an unnormalized coincidence probability.

    Return
    ------
    dict(float)
    """
    sums = {}
    for s, p in click_table.items():
        sums[s.basis_pair] = sums.get(s.basis_pair, 0.0) + p

    out = {}
    for s, p in click_table.items():
        total = sums[s.basis_pair]
        out[s] = p / total if total > 0 else 0.0
    return out


def sample_counts(probs, shots_per_setting, seed):
    """
    Draw binomial counts for every setting.

    Parameters
    ----------
    probs : dict(float)
        Probability per TomoSetting.
    shots_per_setting : int
    seed : int or np.random.SeedSequence
        Seeds a Philox generator. Settings are visited in sorted order.

    Return
    ------
    [CountRecord]
    """
    rng = np.random.Generator(np.random.Philox(seed))
    records = []
    for s in sorted(probs):
        p = min(max(float(probs[s]), 0.0), 1.0)
        counts = int(rng.binomial(shots_per_setting, p))
        records.append(CountRecord(s, counts, int(shots_per_setting)))
    return records


def write_counts_csv(path, records):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["setting_a", "setting_b", "counts", "total"])
        for r in records:
            writer.writerow([r.setting.basis_a, r.setting.basis_b,
                             r.counts, r.total])


def read_counts_csv(path):
    records = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            records.append(CountRecord(TomoSetting(row["setting_a"],
                                                   row["setting_b"]),
                                       int(row["counts"]), int(row["total"])))
    return records


def _check_complete(stack):
    vectors = stack.reshape(len(stack), -1)
    rank = np.linalg.matrix_rank(vectors)
    if rank < 16:
        raise NotInformationallyComplete("projectors span only " + str(rank)
                                         + " of 16 dimensions")


def _log_likelihood(freqs, probs):
    return float(np.sum(xlogy(freqs, probs / np.sum(probs))))


def mle_state(records, history=None, tol=MLE_TOL, max_iter=MLE_MAX_ITER):
    """
    Iterative maximum-likelihood reconstruction.

    The update is rho <- N[T rho T^dagger] with
    T = (sum_j p_j) G^-1 sum_j (f_j / p_j) Pi_j and G = sum_j Pi_j.
    If an update lowers the likelihood it is diluted towards the
    identity, T -> (1 - s) I + s T, halving s until it does not.

    Parameters
    ----------
    records : [CountRecord]
    history : list or None
        Receives the log-likelihood after every iteration.
    tol : float
        Stop when the largest change of an element is below tol.
    max_iter : int

    Return
    ------
    rho : DensityMatrix
    """
    used = [r for r in records if r.total > 0]
    if not used:
        raise NotInformationallyComplete("no settings were measured")
    stack = _projector_stack([r.setting for r in used])
    _check_complete(stack)

    freqs = np.array([r.counts / r.total for r in used])
    if freqs.sum() == 0:
        raise TomographyError("all settings recorded zero counts")
    freqs = freqs / freqs.sum()

    g_inv = np.linalg.inv(stack.sum(axis=0))
    eye = np.eye(4, dtype=complex)

    def probs_of(rho):
        p = np.einsum("jab,ba->j", stack, rho).real
        return np.maximum(p, PROB_FLOOR)

    rho = eye / 4
    probs = probs_of(rho)
    likelihood = _log_likelihood(freqs, probs)

    for iteration in range(max_iter):
        r_op = np.einsum("j,jab->ab", freqs / probs, stack)
        t_op = probs.sum() * g_inv @ r_op

        step = 1.0
        while True:
            t_step = (1 - step) * eye + step * t_op
            new = t_step @ rho @ t_step.conj().T
            new = (new + new.conj().T) / 2
            new = new / np.trace(new).real
            new_probs = probs_of(new)
            new_likelihood = _log_likelihood(freqs, new_probs)
            if new_likelihood >= likelihood - 1e-15 or step < 1e-8:
                break
            step /= 2

        change = np.max(np.abs(new - rho))
        rho, probs, likelihood = new, new_probs, new_likelihood
        if history is not None:
            history.append(likelihood)
        if change < tol:
            logger.debug("MLE converged after %d iterations", iteration + 1)
            break
    else:
        logger.info("MLE stopped after %d iterations without reaching "
                    "tolerance %g", max_iter, tol)

    return DensityMatrix(clip_psd(rho, tol=None))


def linear_inversion(probs):
    """
    Least-squares state from (possibly unnormalized) setting
    probabilities, projected onto the physical states.

    Parameters
    ----------
    probs : dict(float)
        Maps TomoSetting to c Tr(Pi rho) for some unknown c > 0.

    Return
    ------
    rho : DensityMatrix
    """
    settings = sorted(probs)
    stack = _projector_stack(settings)
    _check_complete(stack)

    basis = [np.kron(a, b) / 2 for a in PAULIS for b in PAULIS]
    design = np.einsum("jab,kba->jk", stack, np.array(basis)).real
    values = np.array([probs[s] for s in settings], dtype=float)

    coeffs, _, _, _ = scipy.linalg.lstsq(design, values)
    mat = sum(c * b for c, b in zip(coeffs, basis))
    trace = np.trace(mat).real
    if trace <= 0:
        raise TomographyError("reconstruction has nonpositive trace "
                              + str(trace))

    return DensityMatrix(clip_psd(mat / trace, tol=None))


def _pauli_vectors():
    # v_m = (I x P_m) |phi+>
    return [np.kron(np.eye(2), p) @ PHI_PLUS for p in PAULIS]


def chi_from_choi(rho_choi):
    """
    Pauli-basis process matrix of the channel whose Choi state
    (channel on the second half of |phi+>) is rho_choi.
    """
    if not isinstance(rho_choi, DensityMatrix):
        rho_choi = DensityMatrix(rho_choi)
    vectors = np.array(_pauli_vectors())
    return ChiMatrix(vectors.conj() @ rho_choi.mat @ vectors.T)


def choi_from_chi(chi):
    vectors = np.array(_pauli_vectors())
    return DensityMatrix(vectors.T @ chi.mat @ vectors.conj())


def apply_chi(chi, rho):
    mat = rho.mat if isinstance(rho, DensityMatrix) else np.asarray(rho)
    out = np.zeros((2, 2), dtype=complex)
    for m, pm in enumerate(PAULIS):
        for n, pn in enumerate(PAULIS):
            out += chi.mat[m, n] * pm @ mat @ pn
    return out


def choi_state(ops, weights=None):
    """
    Choi state of a mixture of single-qubit Jones operators.

    Parameters
    ----------
    ops : [JonesOperator or np.ndarray]
        Applied to the second qubit of |phi+>.
    weights : [float] or None
        Mixture weights, uniform when None.

    Return
    ------
    DensityMatrix
    """
    if weights is None:
        weights = [1 / len(ops)] * len(ops)
    mat = np.zeros((4, 4), dtype=complex)
    for op, w in zip(ops, weights):
        op = op.mat if isinstance(op, pol.JonesOperator) else np.asarray(op)
        ket = np.kron(np.eye(2), op) @ PHI_PLUS
        mat += w * np.outer(ket, ket.conj())
    return DensityMatrix(mat / np.trace(mat).real)


def purity(rho):
    mat = rho.mat if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return float(np.trace(mat @ mat).real)


def concurrence(rho):
    """
    Wootters concurrence max(0, l1 - l2 - l3 - l4), with l_i the
    decreasing square roots of the eigenvalues of rho (Y x Y) rho* (Y x Y).
    """
    mat = rho.mat if isinstance(rho, DensityMatrix) else np.asarray(rho)
    yy = np.kron(pol.Y, pol.Y)
    flipped = yy @ mat.conj() @ yy
    root = sqrtm_psd(mat)
    values = herm_eig(root @ flipped @ root)[0]
    lambdas = psd_roots(values)
    return float(max(0.0, lambdas[0] - np.sum(lambdas[1:])))


def eof_from_concurrence(c):
    x = (1 + math.sqrt(max(0.0, 1 - c * c))) / 2
    return float((entr(x) + entr(1 - x)) / math.log(2))


def eof(rho):
    """
    Entanglement of formation in ebits.
    """
    return eof_from_concurrence(concurrence(rho))


def state_summary(rho, target):
    """
    Fidelity to target, purity, concurrence and entanglement of formation.
    """
    c = concurrence(rho)
    return {
        "fidelity": uhlmann_fidelity(rho, target),
        "purity": purity(rho),
        "concurrence": c,
        "eof": eof_from_concurrence(c),
    }


def bootstrap_errors(records, target, seed, n_boot=N_BOOT):
    """
    Parametric bootstrap of the reconstructed state.

    Counts are redrawn from Binomial(total, counts / total), each
    resample is reconstructed by MLE and the sample standard deviation
    of every summary measure is returned.

    Parameters
    ----------
    records : [CountRecord]
    target : DensityMatrix
    seed : int or np.random.SeedSequence
    n_boot : int

    Return
    ------
    dict(float)
    """
    rng = np.random.Generator(np.random.Philox(seed))
    samples = []
    for _ in range(n_boot):
        resampled = []
        for r in records:
            p = r.counts / r.total if r.total else 0.0
            resampled.append(CountRecord(r.setting,
                                         int(rng.binomial(r.total, p)),
                                         r.total))
        samples.append(state_summary(mle_state(resampled), target))

    return {key: float(np.std([s[key] for s in samples], ddof=1))
            for key in samples[0]}


def werner_state(p):
    """
    p |phi+><phi+| + (1 - p) I / 4.
    """
    return DensityMatrix(p * ket_to_density(PHI_PLUS)
                         + (1 - p) * np.eye(4) / 4)
