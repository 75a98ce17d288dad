"""
Entanglement distribution through two noisy channels with a reference
pulse travelling back the other way.

Alice keeps photon A of a pair and sends photon S to Bob. A PBS puts
S_H on the upper channel and S_V on the lower one; a second PBS at
Bob's side recombines the survivors into mode B. Bob sends a
diagonally polarized reference R back through the same channels. By
reciprocity the diagonal Jones elements picked up by S and by R agree,
so a parity check between A and R at Alice's side leaves (A-bar, B) in
the emitted pair state whatever the collective noise was.

Two tiers are provided. run_ideal works with one photon per party and
the Jones elements only. run_full propagates truncated Fock states with
a weak coherent reference, multi-pair emission, mode mismatch and
threshold detectors.

Mode labels
-----------
A_H, A_V, S_H, S_V : the pair.
R_H, R_V : the reference. R_H', R_V' : its temporal modes orthogonal to A.
After the optics: B_H, B_V at Bob, Abar_* at Alice's output port and
C_* at the port projected on D.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Optional, Union

import numpy as np
import scipy.optimize
from scipy.stats import unitary_group

import fock
import polarization as pol
import tomography as tomo
from qmath import DensityMatrix, ket_to_density, uhlmann_fidelity

logger = logging.getLogger(__name__)

PAIR_LABELS = ("A_H", "A_V", "S_H", "S_V")
REFERENCE_LABELS = ("R_H", "R_V")
MISMATCH_LABELS = ("R_H'", "R_V'")
ALL_LABELS = PAIR_LABELS + REFERENCE_LABELS + MISMATCH_LABELS

# pulse repetition rate of the mode-locked laser
REP_RATE_HZ = 80e6

_S2 = 1 / math.sqrt(2)

PAIR_ROUTING = {"S_H": "B_H", "S_V": "B_V", "A_H": "Abar_H", "A_V": "C_V"}
HWP_FLIP = {"R_H": "R_V", "R_V": "R_H"}
REFERENCE_ROUTING = {"R_H": "C_H", "R_V": "Abar_V",
                     "R_H'": "C_H'", "R_V'": "Abar_V'"}

# detector behind the diagonal polarizer at port C
D_GROUP = [{"C_H": _S2, "C_V": _S2}, {"C_H'": _S2}]
ABAR_ALL = ["Abar_H", "Abar_V", "Abar_V'"]
BOB_ALL = ["B_H", "B_V"]

Element = Union[pol.WaveplateSetting, pol.JonesOperator]


def default_modes(cutoff=fock.DEFAULT_CUTOFF, max_dim=fock.DEFAULT_MAX_DIM):
    return fock.ModeSet(ALL_LABELS, cutoff, max_dim)


def _forward(element):
    if isinstance(element, pol.WaveplateSetting):
        return pol.forward_op(element)
    return element


def _backward(element):
    if isinstance(element, pol.WaveplateSetting):
        return pol.backward_op(element)
    return pol.reciprocal_conjugate(element)


@dataclass(frozen=True)
class ChannelOperators:
    """Forward and backward Jones operators of both channels,
    loss included."""

    mf: pol.JonesOperator
    nf: pol.JonesOperator
    mb: pol.JonesOperator
    nb: pol.JonesOperator


@dataclass(frozen=True)
class ChannelConfig:
    """The two noisy channels.

    Attributes
    ----------
    upper, lower : WaveplateSetting or JonesOperator
        Unitary part of each channel. A Jones operator is taken as the
        forward action of a reciprocal medium.
    transmittance : float
        Intensity transmittance T of each channel.
    upper_back, lower_back : optional
        Element seen on the way back. None means the same element,
        i.e. collective noise.
    """

    upper: Element
    lower: Element
    transmittance: float = 1.0
    upper_back: Optional[Element] = None
    lower_back: Optional[Element] = None

    def __post_init__(self):
        if not 0 <= self.transmittance <= 1:
            raise ValueError("transmittance must lie in [0, 1], got "
                             + str(self.transmittance))

    def operators(self):
        amp = math.sqrt(self.transmittance)
        upper_back = self.upper if self.upper_back is None else self.upper_back
        lower_back = self.lower if self.lower_back is None else self.lower_back
        return ChannelOperators(_forward(self.upper).scaled(amp),
                                _forward(self.lower).scaled(amp),
                                _backward(upper_back).scaled(amp),
                                _backward(lower_back).scaled(amp))


@dataclass
class ProtocolOutcome:
    """Result of one protocol evaluation.

    Attributes
    ----------
    success_prob : float
        Probability per pulse of the heralding event.
    rho_out : DensityMatrix or None
        Shared (A-bar, B) polarization state. None when the heralding
        event never happens.
    click_table : dict(float)
        Coincidence probability per tomography setting.
    """

    success_prob: float
    rho_out: Optional[DensityMatrix]
    click_table: dict = field(default_factory=dict)

    def fidelity(self, target):
        if self.rho_out is None:
            return float("nan")
        return uhlmann_fidelity(self.rho_out, target)


def target_state(alpha=_S2, beta=_S2):
    """
    alpha|HH> + beta|VV> on (A-bar, B).
    """
    return DensityMatrix.from_ket(np.array([alpha, 0, 0, beta],
                                           dtype=complex))


def rate_hz(success_prob, rep_rate_hz=REP_RATE_HZ):
    return success_prob * rep_rate_hz


def _check_passive(*ops):
    for op in ops:
        if not op.is_passive():
            raise fock.NotPassive(repr(op) + " amplifies light")


def postselected_amplitudes(mf, nf, mb, nb, alpha=_S2, beta=_S2):
    """
    Amplitudes of the four terms that survive at the output ports.

    Return
    ------
    amp : np.ndarray
        amp[a, r] for a, r in {0: H, 1: V}; a is the polarization of A
        (and of B), r that of the returning reference.
    """
    m_f, n_f = mf.element("H", "H"), nf.element("V", "V")
    m_b, n_b = mb.element("H", "H"), nb.element("V", "V")
    return np.array([[alpha * m_f * m_b, alpha * m_f * n_b],
                     [beta * n_f * m_b, beta * n_f * n_b]]) * _S2


# keeps A=H with R=V and A=V with R=H, mapping A onto the output qubit
def _parity_check():
    proj = np.zeros((4, 8), dtype=complex)
    # 3-qubit index = 4a + 2b + r, output index = 2a + b
    for a, b in product(range(2), range(2)):
        r = 1 - a
        proj[2 * a + b, 4 * a + 2 * b + r] = 1
    return proj


def run_ideal(mf, nf, alpha=_S2, beta=_S2, mb=None, nb=None):
    """
    Single-photon version of the protocol.

    Parameters
    ----------
    mf, nf : JonesOperator
        Forward operators of the upper and lower channels, loss included.
    alpha, beta : complex
        Pair state alpha|HH> + beta|VV>.
    mb, nb : JonesOperator or None
        Backward operators. Default to the reciprocal partners of mf, nf.

    Return
    ------
    ProtocolOutcome
    """
    mb = pol.reciprocal_conjugate(mf) if mb is None else mb
    nb = pol.reciprocal_conjugate(nf) if nb is None else nb
    _check_passive(mf, nf, mb, nb)

    amp = postselected_amplitudes(mf, nf, mb, nb, alpha, beta)
    psi = np.zeros(8, dtype=complex)
    for a, r in product(range(2), range(2)):
        psi[4 * a + 2 * a + r] = amp[a, r]

    out = _parity_check() @ psi
    success = float(np.vdot(out, out).real)
    if success <= fock.ZERO_TRACE:
        return ProtocolOutcome(0.0, None, {s: 0.0 for s in tomo.ALL_SETTINGS})

    rho = DensityMatrix(ket_to_density(out))
    table = {s: success * p for s, p in tomo.exact_probabilities(rho).items()}

    return ProtocolOutcome(success, rho, table)


def _pauli_pairs(collective):
    paulis = list(pol.PauliLabel)
    if collective:
        for u, l in product(paulis, paulis):
            yield u, l, u, l
    else:
        for u, l, ub, lb in product(paulis, repeat=4):
            yield u, l, ub, lb


def _pauli_config(transmittance, u, l, ub, lb):
    return ChannelConfig(pol.pauli_setting(u), pol.pauli_setting(l),
                         transmittance, pol.pauli_setting(ub),
                         pol.pauli_setting(lb))


def _mix_ideal(outcomes):
    successes = [o.success_prob for o in outcomes]
    total = math.fsum(successes)
    avg_success = total / len(outcomes)
    if total <= 0:
        return avg_success, None

    mat = np.zeros((4, 4), dtype=complex)
    for o in outcomes:
        if o.rho_out is not None:
            mat += o.success_prob * o.rho_out.mat
    return avg_success, DensityMatrix(mat / total)


def depolarizing_average_ideal(transmittance, collective=True, alpha=_S2,
                               beta=_S2):
    """
    Average of run_ideal over the Pauli settings of both channels.

    Parameters
    ----------
    transmittance : float
    collective : bool
        True uses the same setting in both directions (16 pairs),
        False draws the backward settings independently (256 cases).

    Return
    ------
    avg_success : float
        T^2 / 8 for collective noise.
    avg_state : DensityMatrix or None
        Success-weighted mixture of the postselected states.
    """
    outcomes = []
    for u, l, ub, lb in _pauli_pairs(collective):
        ops = _pauli_config(transmittance, u, l, ub, lb).operators()
        outcomes.append(run_ideal(ops.mf, ops.nf, alpha, beta,
                                  ops.mb, ops.nb))
    return _mix_ideal(outcomes)


def _random_unitary(rng):
    return pol.JonesOperator(unitary_group.rvs(2, random_state=rng))


def _haar_configs(transmittance, samples, seed, collective):
    rng = np.random.Generator(np.random.Philox(seed))
    for _ in range(samples):
        upper, lower = _random_unitary(rng), _random_unitary(rng)
        if collective:
            yield ChannelConfig(upper, lower, transmittance)
        else:
            yield ChannelConfig(upper, lower, transmittance,
                                _random_unitary(rng), _random_unitary(rng))


def haar_average_ideal(transmittance, samples, seed, collective=True,
                       alpha=_S2, beta=_S2):
    """
    Monte Carlo average of run_ideal over Haar-random channel unitaries.
    """
    outcomes = []
    for cfg in _haar_configs(transmittance, samples, seed, collective):
        ops = cfg.operators()
        outcomes.append(run_ideal(ops.mf, ops.nf, alpha, beta,
                                  ops.mb, ops.nb))
    return _mix_ideal(outcomes)


def _zero_outcome():
    return ProtocolOutcome(0.0, None, {s: 0.0 for s in tomo.ALL_SETTINGS})


def _reference_at_alice(src, ops, modes, reference_scaling,
                        single_photon_reference, transmittance):
    ref_modes = modes.subset(REFERENCE_LABELS)
    t_upper = ops.mb.element("H", "H")
    t_lower = ops.nb.element("V", "V")

    if single_photon_reference:
        ref = fock.single_photon_state({"R_H": _S2, "R_V": _S2}, ref_modes)
        ref = fock.apply_amp_loss(ref, "R_H", t_upper)
        return fock.apply_amp_loss(ref, "R_V", t_lower)

    # a coherent pulse stays coherent under loss, amplitude t times
    mean_at_bob = src.mu / transmittance if reference_scaling else src.mu
    a = math.sqrt(mean_at_bob / 2)
    return fock.coherent_state({"R_H": t_upper * a, "R_V": t_lower * a},
                               ref_modes)


def run_full(src, cfg, modes=None, reference_scaling=True,
             single_photon_reference=False):
    """
    Fock-space simulation of one channel configuration.

    Parameters
    ----------
    src : SourceParams
    cfg : ChannelConfig
    modes : ModeSet or None
        Must contain ALL_LABELS. Defaults to default_modes().
    reference_scaling : bool
        Launch the reference with mean photon number mu / T at Bob, so
        that mu arrives at Alice.
    single_photon_reference : bool
        Replace the coherent pulse by one photon in |D>.

    Return
    ------
    ProtocolOutcome
        success_prob is the probability of a click at Bob, at port
        A-bar and behind the diagonal polarizer at port C.
    """
    modes = default_modes() if modes is None else modes
    if modes.cutoff < 2:
        raise fock.CutoffTooSmall("the full simulation needs cutoff >= 2, "
                                  "got " + str(modes.cutoff))
    for label in ALL_LABELS:
        modes.index(label)

    T = cfg.transmittance
    if T == 0:
        return _zero_outcome()

    ops = cfg.operators()
    _check_passive(ops.mf, ops.nf, ops.mb, ops.nb)

    pair = fock.spdc_state(src, modes.subset(PAIR_LABELS))
    pair = fock.apply_amp_loss(pair, "S_H", ops.mf.element("H", "H"))
    pair = fock.apply_amp_loss(pair, "S_V", ops.nf.element("V", "V"))
    pair = fock.pbs_route(pair, PAIR_ROUTING)

    ref = _reference_at_alice(src, ops, modes, reference_scaling,
                              single_photon_reference, T)
    ref = fock.pbs_route(ref, HWP_FLIP)
    ref = fock.split_mode_mismatch(ref, "R_H", "R_H", "R_H'", src.visibility)
    ref = fock.split_mode_mismatch(ref, "R_V", "R_V", "R_V'", src.visibility)
    ref = fock.pbs_route(ref, REFERENCE_ROUTING)

    p_bob, heralded = fock.threshold_click_prob(pair, [BOB_ALL])
    success = p_bob * fock.product_click_prob(
        [heralded.reduced(["Abar_H", "C_V"]), ref], [D_GROUP, ABAR_ALL])

    table = {}
    for b in tomo.LETTERS:
        kb = tomo.polarization_ket(b)
        bob_mode = {"B_H": kb[0].conjugate(), "B_V": kb[1].conjugate()}
        p_b, conditioned = fock.threshold_click_prob(pair, [[bob_mode]])
        alice_side = conditioned.reduced(["Abar_H", "C_V"])
        for a in tomo.LETTERS:
            ka = tomo.polarization_ket(a)
            abar = [{"Abar_H": ka[0].conjugate(), "Abar_V": ka[1].conjugate()},
                    {"Abar_V'": ka[1].conjugate()}]
            p_a = fock.product_click_prob([alice_side, ref], [D_GROUP, abar])
            table[tomo.TomoSetting(a, b)] = p_b * p_a

    logger.debug("run_full T=%g success=%.4g", T, success)

    if success <= 0:
        return ProtocolOutcome(0.0, None, table)

    return ProtocolOutcome(success, tomo.linear_inversion(table), table)


def _run_full_job(job):
    src, cfg, modes, reference_scaling, single_photon_reference = job
    return run_full(src, cfg, modes, reference_scaling,
                    single_photon_reference)


def _mix_full(outcomes):
    n = len(outcomes)
    success = math.fsum(o.success_prob for o in outcomes) / n
    table = {s: math.fsum(o.click_table[s] for o in outcomes) / n
             for s in tomo.ALL_SETTINGS}
    if success <= 0:
        return ProtocolOutcome(0.0, None, table)
    return ProtocolOutcome(success, tomo.linear_inversion(table), table)


def depolarizing_average_full(src, transmittance, modes=None, collective=True,
                              reference_scaling=True,
                              single_photon_reference=False, mapper=map):
    """
    Uniform mixture of run_full over the Pauli settings of both channels.

    Parameters
    ----------
    src : SourceParams
    transmittance : float
    modes : ModeSet or None
    collective : bool
        Same setting for both passes through a channel.
    reference_scaling : bool
    single_photon_reference : bool
    mapper : callable
        map-like function used to evaluate the settings, e.g. Pool.map.
        Results are combined in a fixed order.

    Return
    ------
    ProtocolOutcome
    """
    jobs = [(src, _pauli_config(transmittance, u, l, ub, lb), modes,
             reference_scaling, single_photon_reference)
            for u, l, ub, lb in _pauli_pairs(collective)]
    return _mix_full(list(mapper(_run_full_job, jobs)))


def haar_average_full(src, transmittance, samples, seed, modes=None,
                      collective=True, reference_scaling=True, mapper=map):
    """
    Monte Carlo average of run_full over Haar-random channel unitaries.
    """
    jobs = [(src, cfg, modes, reference_scaling, False)
            for cfg in _haar_configs(transmittance, samples, seed,
                                     collective)]
    return _mix_full(list(mapper(_run_full_job, jobs)))


def calibrate_visibility(src, modes=None, target=0.85, transmittance=1.0,
                         reference_scaling=True, xtol=1e-6, mapper=map):
    """
    Find the mode-match visibility at which the depolarizing ensemble
    reaches the target fidelity.

    Return
    ------
    v : float
        Clamped to 0 or 1 when the target lies outside the reachable range.
    """
    goal = target_state(src.alpha, src.beta)

    def excess(v):
        outcome = depolarizing_average_full(replace(src, visibility=v),
                                            transmittance, modes,
                                            reference_scaling=reference_scaling,
                                            mapper=mapper)
        f = outcome.fidelity(goal)
        logger.debug("visibility %.6f gives fidelity %.6f", v, f)
        return f - target

    high = excess(1.0)
    if high <= 0:
        logger.warning("fidelity %.4f at full visibility is below target %.4f",
                       high + target, target)
        return 1.0
    low = excess(0.0)
    if low >= 0:
        logger.warning("fidelity already reaches %.4f at zero visibility",
                       target)
        return 0.0

    v = scipy.optimize.brentq(excess, 0.0, 1.0, xtol=xtol)
    logger.info("calibrated visibility %.6f for fidelity %.3f", v, target)
    return v
