"""
Truncated multimode Fock space.

A state lives on an ordered set of named bosonic modes, each truncated
at `cutoff` photons. Density matrices are stored as dense arrays of size
(cutoff + 1) ** n; operations on a few modes reshape the matrix into an
order-2n tensor and contract only the touched axes.

Every state carries `norm`, the probability of the events that have
been postselected so far. Operations that condition on an outcome
multiply it, operations that are trace-preserving leave it alone.
"""

import logging
import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.special import comb, factorial

from qmath import DensityMatrix, InvalidDims, partial_trace_matrix, sqrtm_psd

logger = logging.getLogger(__name__)

DEFAULT_CUTOFF = 2
DEFAULT_MAX_DIM = 4096
PASSIVE_TOL = 1e-12
NORM_TOL = 1e-9
# traces and click probabilities below this are an impossible event
ZERO_TRACE = 1e-14

# routing target that removes a mode
DISCARD = None


class FockError(Exception):
    """Base class for Fock space errors."""


class CutoffTooSmall(FockError):
    pass


class UnknownMode(FockError):
    pass


class NotPassive(FockError):
    pass


class ModeCollision(FockError):
    pass


class InvalidVisibility(FockError):
    pass


class SpaceTooLarge(FockError):
    pass


class ModeSet:
    """Ordered, named bosonic modes sharing one photon-number cutoff.

    Attributes
    ----------
    labels : tuple(str)
    cutoff : int
        Maximum photon number per mode.
    max_dim : int
        Largest Hilbert space dimension that may be allocated.
    """

    def __init__(self, labels, cutoff=DEFAULT_CUTOFF, max_dim=DEFAULT_MAX_DIM):
        labels = tuple(labels)
        if len(set(labels)) != len(labels):
            raise ModeCollision("duplicate mode labels in " + str(labels))
        if int(cutoff) < 1:
            raise CutoffTooSmall("cutoff must be at least 1, got "
                                 + str(cutoff))

        self.labels = labels
        self.cutoff = int(cutoff)
        self.max_dim = int(max_dim)

    def require_allocatable(self):
        """
        Raise SpaceTooLarge unless a density matrix over these modes
        fits the dimension limit.
        """
        if self.dim > self.max_dim:
            raise SpaceTooLarge(str(len(self.labels)) + " modes at cutoff "
                                + str(self.cutoff) + " need dimension "
                                + str(self.dim) + " > " + str(self.max_dim))

    @property
    def local_dim(self):
        return self.cutoff + 1

    @property
    def dim(self):
        return self.local_dim ** len(self.labels)

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, label):
        return label in self.labels

    def __eq__(self, other):
        return (isinstance(other, ModeSet) and self.labels == other.labels
                and self.cutoff == other.cutoff)

    def __repr__(self):
        return ("ModeSet(" + ", ".join(self.labels) + "; cutoff="
                + str(self.cutoff) + ")")

    def index(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownMode("mode " + str(label) + " not in "
                              + str(self.labels))

    def with_labels(self, labels):
        """
        New ModeSet with the same cutoff and dimension limit.
        """
        return ModeSet(labels, self.cutoff, self.max_dim)

    def subset(self, labels):
        for label in labels:
            self.index(label)
        return self.with_labels(labels)

    def renamed(self, mapping):
        return self.with_labels([mapping.get(l, l) for l in self.labels])


class FockDensity:
    """Density matrix over a ModeSet plus the probability of its history.

    Attributes
    ----------
    modes : ModeSet
    rho : DensityMatrix
        Normalized state. An impossible event is stored as vacuum.
    norm : float
        Cumulative probability of the postselected events, in [0, 1].
    """

    def __init__(self, modes, mat, norm=1.0):
        """
        Parameters
        ----------
        modes : ModeSet
        mat : array_like or DensityMatrix
            Possibly unnormalized density matrix. Its trace is
            folded into norm.
        norm : float
            Probability carried over from the parent state.
        """
        if isinstance(mat, DensityMatrix):
            mat = mat.mat
        mat = np.asarray(mat, dtype=complex)
        if mat.shape != (modes.dim, modes.dim):
            raise InvalidDims("matrix of shape " + str(mat.shape)
                              + " does not fit " + repr(modes))

        trace = float(np.trace(mat).real)
        if not trace > ZERO_TRACE:
            mat = _vacuum_matrix(modes)
            norm = 0.0
        else:
            mat = mat / trace
            norm = norm * trace

        if norm > 1 + NORM_TOL:
            logger.warning("event probability %g exceeds one", norm)

        self.modes = modes
        self.rho = DensityMatrix((mat + mat.conj().T) / 2, validate=False)
        self.norm = float(norm)

    def __repr__(self):
        return ("FockDensity(" + repr(self.modes) + ", norm="
                + "{:.6g}".format(self.norm) + ")")

    @property
    def mat(self):
        return self.rho.mat

    def as_tensor(self):
        d = self.modes.local_dim
        return self.rho.mat.reshape((d,) * (2 * len(self.modes)))

    def reduced(self, labels):
        """
        Trace out every mode not in labels.
        Kept modes stay in their original order.
        """
        keep = sorted(self.modes.index(l) for l in labels)
        kept = self.modes.with_labels([self.modes.labels[i] for i in keep])
        d = self.modes.local_dim
        mat = partial_trace_matrix(self.rho.mat, [d] * len(self.modes), keep)
        return FockDensity(kept, mat, self.norm)

    def photon_number_distribution(self, label):
        reduced = self.reduced([label])
        return np.real(np.diag(reduced.rho.mat)).copy()


def _vacuum_matrix(modes):
    modes.require_allocatable()
    mat = np.zeros((modes.dim, modes.dim), dtype=complex)
    mat[0, 0] = 1
    return mat


def vacuum_state(modes):
    return FockDensity(modes, _vacuum_matrix(modes))


def tensor_product(a, b):
    """
    Joint state of two independent FockDensity objects on disjoint modes.
    """
    if a.modes.cutoff != b.modes.cutoff:
        raise InvalidDims("cannot combine cutoffs " + str(a.modes.cutoff)
                          + " and " + str(b.modes.cutoff))
    modes = a.modes.with_labels(a.modes.labels + b.modes.labels)
    modes.require_allocatable()
    return FockDensity(modes, np.kron(a.rho.mat, b.rho.mat), a.norm * b.norm)


def annihilation(cutoff):
    n = np.arange(1, cutoff + 1)
    return np.diag(np.sqrt(n), k=1).astype(complex)


def _contract(t, axes, op, d):
    # apply op (d^k x d^k) to the listed axes of t
    k = len(axes)
    front = list(range(k))
    t = np.moveaxis(t, axes, front)
    shape = t.shape
    t = (op @ t.reshape(d ** k, -1)).reshape(shape)
    return np.moveaxis(t, front, axes)


def _left_multiply(state, labels, op):
    # (op x I) rho as a plain matrix
    modes = state.modes
    axes = [modes.index(l) for l in labels]
    t = _contract(state.as_tensor(), axes, op, modes.local_dim)
    return t.reshape(modes.dim, modes.dim)


def _sandwich(state, labels, ops):
    """
    Sum_k K_k rho K_k^dagger for operators acting on the listed modes.
    """
    modes = state.modes
    n, d = len(modes), modes.local_dim
    axes = [modes.index(l) for l in labels]
    bra_axes = [a + n for a in axes]
    tensor = state.as_tensor()

    total = np.zeros_like(tensor)
    for op in ops:
        t = _contract(tensor, axes, op, d)
        total += _contract(t, bra_axes, op.conj(), d)

    return total.reshape(modes.dim, modes.dim)


@dataclass(frozen=True)
class SourceParams:
    """Parameters of the photon pair source and the reference pulse.

    Attributes
    ----------
    gamma : float
        Pair generation probability per pulse.
    alpha, beta : complex
        Amplitudes of the emitted pair state alpha|HH> + beta|VV>.
    mu : float
        Mean photon number of the reference pulse on arrival at Alice.
    visibility : float
        Mode overlap between the pair photon and the reference.
    max_pairs : int or None
        Largest number of pairs emitted in one pulse.
        None means as many as the cutoff holds.
    """

    gamma: float = 2e-3
    alpha: complex = 1 / math.sqrt(2)
    beta: complex = 1 / math.sqrt(2)
    mu: float = 0.09
    visibility: float = 1.0
    max_pairs: int = None

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1), got "
                             + str(self.gamma))
        if not (math.isfinite(self.mu) and self.mu >= 0):
            raise ValueError("mu must be a finite nonnegative number, got "
                             + str(self.mu))
        weight = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(weight - 1) > 1e-9:
            raise ValueError("alpha, beta must satisfy |alpha|^2 + |beta|^2"
                             " = 1, got " + str(weight))
        if not 0 <= self.visibility <= 1:
            raise ValueError("visibility must lie in [0, 1], got "
                             + str(self.visibility))
        if self.max_pairs is not None and int(self.max_pairs) < 0:
            raise ValueError("max_pairs must be nonnegative, got "
                             + str(self.max_pairs))

    @classmethod
    def from_alpha_sq(cls, alpha_sq, **kwargs):
        """
        Build parameters with real alpha = sqrt(alpha_sq),
        beta = sqrt(1 - alpha_sq).
        """
        if not 0 <= alpha_sq <= 1:
            raise ValueError("alpha_sq must lie in [0, 1], got "
                             + str(alpha_sq))
        return cls(alpha=math.sqrt(alpha_sq), beta=math.sqrt(1 - alpha_sq),
                   **kwargs)


PAIR_MODES = ("A_H", "A_V", "S_H", "S_V")


def _basis_index(modes, occupation):
    # occupation: label -> photon number, other modes empty
    d = modes.local_dim
    idx = 0
    for label in modes.labels:
        idx = idx * d + occupation.get(label, 0)
    return idx


def _pure(modes, ket):
    modes.require_allocatable()
    return FockDensity(modes, np.outer(ket, ket.conj()))


def spdc_state(p, modes):
    """
    Multi-pair output of a down-conversion source.

    The n-pair term of
        sum_n gamma^(n/2) (alpha a+_AH a+_SH + beta a+_AV a+_SV)^n / n! |0>
    has amplitude gamma^(n/2) alpha^k beta^(n-k) on
    |k, n-k, k, n-k> over (A_H, A_V, S_H, S_V).

    Parameters
    ----------
    p : SourceParams
    modes : ModeSet
        Must contain A_H, A_V, S_H and S_V. Other modes stay empty.

    Return
    ------
    state : FockDensity
    """
    for label in PAIR_MODES:
        modes.index(label)

    max_pairs = modes.cutoff
    if p.max_pairs is not None:
        max_pairs = min(max_pairs, int(p.max_pairs))

    ket = np.zeros(modes.dim, dtype=complex)
    for n in range(max_pairs + 1):
        for k in range(n + 1):
            occupation = {"A_H": k, "A_V": n - k, "S_H": k, "S_V": n - k}
            amplitude = (p.gamma ** (n / 2) * complex(p.alpha) ** k
                         * complex(p.beta) ** (n - k))
            ket[_basis_index(modes, occupation)] += amplitude

    logger.debug("pair state with up to %d pairs, gamma=%g",
                 max_pairs, p.gamma)

    # truncated series, renormalized like the coherent ket
    return _pure(modes, ket / np.linalg.norm(ket))


def _coherent_ket(amplitude, cutoff):
    n = np.arange(cutoff + 1)
    ket = (np.exp(-abs(amplitude) ** 2 / 2) * complex(amplitude) ** n
           / np.sqrt(factorial(n)))
    return ket / np.linalg.norm(ket)


def coherent_state(amplitudes, modes):
    """
    Product of truncated coherent states.

    Parameters
    ----------
    amplitudes : dict(complex)
        Coherent amplitude per mode label. Unlisted modes are vacuum.
    modes : ModeSet

    Return
    ------
    state : FockDensity
    """
    for label, a in amplitudes.items():
        modes.index(label)
        if abs(a) ** 2 > modes.cutoff:
            logger.warning("coherent amplitude %.3g in %s is large for "
                           "cutoff %d", abs(a), label, modes.cutoff)

    kets = []
    for label in modes.labels:
        kets.append(_coherent_ket(amplitudes.get(label, 0), modes.cutoff))

    return _pure(modes, reduce(np.kron, kets))


def single_photon_state(amplitudes, modes):
    """
    One photon in the superposition sum_l c_l a+_l |0>.
    """
    ket = np.zeros(modes.dim, dtype=complex)
    for label, c in amplitudes.items():
        modes.index(label)
        ket[_basis_index(modes, {label: 1})] += c

    if np.vdot(ket, ket).real == 0:
        raise ValueError("single photon amplitudes are all zero")

    return _pure(modes, ket / np.linalg.norm(ket))


def loss_kraus(t, cutoff):
    """
    Kraus operators of a pure-loss channel with complex amplitude
    transmissivity t,
        K_k = sum_n sqrt(C(n, k)) t^(n-k) sqrt(1 - |t|^2)^k |n-k><n|.
    """
    eta = min(abs(t) ** 2, 1.0)
    r = math.sqrt(1 - eta)
    ops = []
    for k in range(cutoff + 1):
        op = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
        for n in range(k, cutoff + 1):
            op[n - k, n] = math.sqrt(comb(n, k, exact=True)) * t ** (n - k) * r ** k
        ops.append(op)
    return ops


def apply_amp_loss(state, mode, t):
    """
    Send one mode through a loss element with amplitude transmissivity t.

    Parameters
    ----------
    state : FockDensity
    mode : str
    t : complex
        |t|^2 is the intensity transmittance. The phase of t is picked
        up once per surviving photon.

    Return
    ------
    state : FockDensity
        Trace is preserved.
    """
    t = complex(t)
    if abs(t) > 1 + PASSIVE_TOL:
        raise NotPassive("amplitude transmissivity " + str(t)
                         + " has modulus above one")
    state.modes.index(mode)
    ops = loss_kraus(t, state.modes.cutoff)

    return FockDensity(state.modes, _sandwich(state, [mode], ops), state.norm)


def pbs_route(state, routing, postselect_vacuum=False):
    """
    Relabel modes after a network of polarizing beamsplitters.

    Parameters
    ----------
    state : FockDensity
    routing : dict
        Maps input labels to output labels, or to DISCARD for ports
        nothing is placed behind. Unlisted modes keep their names.
    postselect_vacuum : bool
        False traces discarded modes out. True keeps only the events
        in which nothing left through a discarded port, which lowers
        norm by the probability of the complement.

    Return
    ------
    state : FockDensity
    """
    modes = state.modes
    for label in routing:
        modes.index(label)

    kept, discarded, names = [], [], []
    for i, label in enumerate(modes.labels):
        target = routing.get(label, label)
        if target is DISCARD:
            discarded.append(i)
        else:
            kept.append(i)
            names.append(target)

    if len(set(names)) != len(names):
        raise ModeCollision("routing " + str(routing) + " sends two modes to "
                            "the same port")

    if not discarded:
        return FockDensity(modes.with_labels(names), state.rho.mat, state.norm)

    n, d = len(modes), modes.local_dim
    if postselect_vacuum:
        index = tuple(0 if (i % n) in discarded else slice(None)
                      for i in range(2 * n))
        sub = state.as_tensor()[index]
        dim = d ** len(kept)
        mat = sub.reshape(dim, dim)
    else:
        mat = partial_trace_matrix(state.rho.mat, [d] * n, kept)

    return FockDensity(modes.with_labels(names), mat, state.norm)


def split_mode_mismatch(state, mode, matched, orthogonal, v):
    """
    Split a mode into a part that overlaps the reference temporal mode
    and a part orthogonal to it.

    The orthogonal mode starts empty and is appended at the end; the
    split acts as a beamsplitter a -> sqrt(v) a_matched
    + sqrt(1 - v) a_orthogonal. As the orthogonal input is vacuum the
    map is an exact isometry inside the truncation.

    Parameters
    ----------
    state : FockDensity
    mode : str
        Mode to split. It is renamed to matched.
    matched, orthogonal : str
    v : float
        Visibility in [0, 1].

    Return
    ------
    state : FockDensity
    """
    if not 0 <= v <= 1:
        raise InvalidVisibility("visibility must lie in [0, 1], got "
                                + str(v))

    modes = state.modes
    modes.index(mode)
    if orthogonal in modes:
        raise ModeCollision("mode " + orthogonal + " already exists")
    if matched != mode and matched in modes:
        raise ModeCollision("mode " + matched + " already exists")

    renamed = modes.renamed({mode: matched})
    out_modes = renamed.with_labels(renamed.labels + (orthogonal,))
    out_modes.require_allocatable()

    empty = np.zeros((modes.local_dim, modes.local_dim), dtype=complex)
    empty[0, 0] = 1
    widened = FockDensity(out_modes, np.kron(state.rho.mat, empty), state.norm)

    c = modes.cutoff
    d = modes.local_dim
    split = np.zeros((d * d, d * d), dtype=complex)
    for n in range(c + 1):
        for k in range(n + 1):
            amp = (math.sqrt(comb(n, k, exact=True)) * v ** (k / 2)
                   * (1 - v) ** ((n - k) / 2))
            split[k * d + (n - k), n * d] = amp

    return FockDensity(out_modes,
                       _sandwich(widened, [matched, orthogonal], [split]),
                       state.norm)


def _normalize_group(group):
    # a group is a list of detection modes, each a label or {label: weight}
    if isinstance(group, (str, dict)):
        group = [group]
    detection = []
    for mode in group:
        if isinstance(mode, str):
            detection.append({mode: 1.0})
        else:
            detection.append(dict(mode))
    if not detection:
        raise ValueError("empty click group")
    return detection


def _group_labels(detection):
    labels = []
    for mode in detection:
        for label in mode:
            if label not in labels:
                labels.append(label)
    return labels


def _embedded(op, position, count, d):
    # single-mode op at position among count modes
    mats = [np.eye(d, dtype=complex)] * count
    mats[position] = op
    return reduce(np.kron, mats)


def no_click_operator(group, cutoff):
    """
    Operator for "no photon reaches this detector".

    For a detection mode c = sum_l w_l a_l the operator is
    sum_k (-1)^k (c^k)^dagger c^k / k!, which is exact inside the
    truncation because c only lowers photon numbers. Detection modes of
    one group act on distinct degrees of freedom, so their operators are
    multiplied.

    Parameters
    ----------
    group : list
        Detection modes, each a label or a {label: weight} dict.
    cutoff : int

    Return
    ------
    labels : [str]
        Modes the operator acts on, in matrix order.
    op : np.ndarray
    """
    detection = _normalize_group(group)
    labels = _group_labels(detection)
    d = cutoff + 1
    a = annihilation(cutoff)
    dim = d ** len(labels)

    total = np.eye(dim, dtype=complex)
    for mode in detection:
        c = sum(w * _embedded(a, labels.index(l), len(labels), d)
                for l, w in mode.items())
        op = np.zeros((dim, dim), dtype=complex)
        power = np.eye(dim, dtype=complex)
        k = 0
        while np.any(power) and k <= cutoff * len(labels):
            op += (-1) ** k * (power.conj().T @ power) / math.factorial(k)
            power = c @ power
            k += 1
        total = total @ op

    return labels, total


def _click_operator(click_modes, cutoff):
    # product over groups of (I - N_g), acting on the union of their labels
    labels, mats = [], []
    for group in click_modes:
        group_labels, no_click = no_click_operator(group, cutoff)
        overlap = set(labels) & set(group_labels)
        if overlap:
            raise ModeCollision("click groups share modes " + str(overlap))
        labels.extend(group_labels)
        mats.append(np.eye(no_click.shape[0]) - no_click)
    return labels, reduce(np.kron, mats)


def threshold_click_prob(state, click_modes):
    """
    Probability that every group registers at least one photon.

    Parameters
    ----------
    state : FockDensity
    click_modes : list
        One entry per threshold detector. An entry lists the detection
        modes that reach that detector (e.g. two temporal modes), each
        a label or a {label: weight} dict describing a polarizer.

    Return
    ------
    prob : float
        Click probability conditional on the state's own history.
    conditioned : FockDensity
        Post-measurement state sqrt(E) rho sqrt(E) / prob, with norm
        multiplied by prob.
    """
    if not click_modes:
        raise ValueError("no click groups given")

    labels, click = _click_operator(click_modes, state.modes.cutoff)
    for label in labels:
        state.modes.index(label)

    prob = float(np.trace(_left_multiply(state, labels, click)).real)
    prob = min(prob, 1.0) if prob > ZERO_TRACE else 0.0

    root = sqrtm_psd(click)
    conditioned = FockDensity(state.modes, _sandwich(state, labels, [root]),
                              state.norm)

    return prob, conditioned


def product_click_prob(states, click_modes):
    """
    Coincidence probability of independent states on disjoint modes.

    The joint density is never formed. The click operator
    prod_g (I - N_g) is expanded by inclusion-exclusion and each term
    is contracted against the factors with einsum.

    Parameters
    ----------
    states : [FockDensity]
    click_modes : list
        As for threshold_click_prob. A detection mode may mix labels
        from different factors.

    Return
    ------
    prob : float
        Conditional on the histories of the factors, whose norms are
        not included.
    """
    if not states:
        raise ValueError("no states given")
    cutoff = states[0].modes.cutoff
    d = cutoff + 1

    owner = {}
    for i, s in enumerate(states):
        if s.modes.cutoff != cutoff:
            raise InvalidDims("factors have different cutoffs")
        for label in s.modes.labels:
            if label in owner:
                raise ModeCollision("mode " + label + " in two factors")
            owner[label] = i

    groups = []
    seen = set()
    for group in click_modes:
        labels, no_click = no_click_operator(group, cutoff)
        for label in labels:
            if label not in owner:
                raise UnknownMode("mode " + str(label) + " not in any factor")
        if seen & set(labels):
            raise ModeCollision("click groups share modes "
                                + str(seen & set(labels)))
        seen.update(labels)
        groups.append((labels, no_click.reshape((d,) * (2 * len(labels)))))

    # ket index of mode m is 2m, bra index 2m + 1
    index = {}
    for label in owner:
        index[label] = len(index)

    total = 0.0
    for subset in range(1 << len(groups)):
        chosen = [groups[g] for g in range(len(groups)) if subset >> g & 1]
        touched = set(l for labels, _ in chosen for l in labels)

        operands = []
        for s in states:
            ket = [2 * index[l] for l in s.modes.labels]
            bra = [2 * index[l] + (1 if l in touched else 0)
                   for l in s.modes.labels]
            operands += [s.as_tensor(), ket + bra]
        for labels, op in chosen:
            # Tr(N rho): N's row index meets rho's bra, column meets ket
            rows = [2 * index[l] + 1 for l in labels]
            cols = [2 * index[l] for l in labels]
            operands += [op, rows + cols]

        term = np.einsum(*operands, [], optimize="greedy")
        sign = -1 if bin(subset).count("1") % 2 else 1
        total += sign * term.real

    total = float(total)
    return min(total, 1.0) if total > ZERO_TRACE else 0.0


def expect_photon_number(state, label):
    dist = state.photon_number_distribution(label)
    return float(np.dot(np.arange(len(dist)), dist))
