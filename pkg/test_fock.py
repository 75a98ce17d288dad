import math
from functools import reduce

import numpy as np
import pytest

import fock
from fock import ModeSet, SourceParams


PAIR = ModeSet(fock.PAIR_MODES, cutoff=2)


def creation(label, modes):
    d = modes.local_dim
    a_dag = fock.annihilation(modes.cutoff).conj().T
    mats = [a_dag if l == label else np.eye(d) for l in modes.labels]
    return reduce(np.kron, mats)


def basis(modes, **occupation):
    return fock._basis_index(modes, occupation)


def random_state(modes, seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(modes.dim, modes.dim)) \
        + 1j * rng.normal(size=(modes.dim, modes.dim))
    mat = g @ g.conj().T
    return fock.FockDensity(modes, mat / np.trace(mat).real)


def test_mode_set_errors():
    with pytest.raises(fock.ModeCollision):
        ModeSet(["a", "a"])
    with pytest.raises(fock.CutoffTooSmall):
        ModeSet(["a"], cutoff=0)
    with pytest.raises(fock.UnknownMode):
        ModeSet(["a"]).index("b")
    big = ModeSet(["m" + str(i) for i in range(8)], cutoff=2)
    with pytest.raises(fock.SpaceTooLarge):
        fock.vacuum_state(big)


def test_source_params_validation():
    with pytest.raises(ValueError):
        SourceParams(gamma=1.0)
    with pytest.raises(ValueError):
        SourceParams(mu=-0.1)
    with pytest.raises(ValueError):
        SourceParams(alpha=1, beta=1)
    with pytest.raises(ValueError):
        SourceParams(visibility=1.2)
    p = SourceParams.from_alpha_sq(0.3)
    assert abs(p.alpha) ** 2 == pytest.approx(0.3)


def test_spdc_without_pairs_is_vacuum():
    state = fock.spdc_state(SourceParams(gamma=0.0), PAIR)
    assert state.mat[0, 0] == pytest.approx(1)
    assert np.trace(state.mat).real == pytest.approx(1)


def test_spdc_single_pair_sector():
    gamma = 2e-3
    state = fock.spdc_state(SourceParams(gamma=gamma), PAIR)
    hh = basis(PAIR, A_H=1, S_H=1)
    vv = basis(PAIR, A_V=1, S_V=1)
    # amplitude ratio to vacuum
    ratio = state.mat[hh, 0] / state.mat[0, 0]
    assert abs(ratio) == pytest.approx(math.sqrt(gamma) / math.sqrt(2))
    # conditional one-pair state is |phi+>
    sector = state.mat[np.ix_([hh, vv], [hh, vv])]
    sector = sector / np.trace(sector)
    assert np.allclose(sector, np.full((2, 2), 0.5))


def test_spdc_matches_creation_operator_expansion():
    p = SourceParams(gamma=0.01, alpha=0.6, beta=0.8j)
    pair_op = (p.alpha * creation("A_H", PAIR) @ creation("S_H", PAIR)
               + p.beta * creation("A_V", PAIR) @ creation("S_V", PAIR))
    vac = np.zeros(PAIR.dim, dtype=complex)
    vac[0] = 1
    ket = sum(p.gamma ** (n / 2) * np.linalg.matrix_power(pair_op, n) @ vac
              / math.factorial(n) for n in range(3))
    expected = np.outer(ket, ket.conj()) / np.vdot(ket, ket).real
    assert np.allclose(fock.spdc_state(p, PAIR).mat, expected, atol=1e-12)


def test_spdc_has_even_photon_number():
    state = fock.spdc_state(SourceParams(gamma=0.05), PAIR)
    d = PAIR.local_dim
    for idx in range(PAIR.dim):
        photons = sum(int(c) for c in np.base_repr(idx, d).zfill(4))
        if photons % 2:
            assert abs(state.mat[idx, idx]) < 1e-12


def test_spdc_max_pairs():
    state = fock.spdc_state(SourceParams(gamma=0.05, max_pairs=1), PAIR)
    two = basis(PAIR, A_H=2, S_H=2)
    assert abs(state.mat[two, two]) == 0
    assert state.norm == pytest.approx(1, abs=1e-12)


@pytest.mark.parametrize("gamma", [0.0, 2e-3, 0.05, 0.3])
def test_spdc_state_has_unit_norm(gamma):
    state = fock.spdc_state(SourceParams(gamma=gamma), PAIR)
    assert state.norm == pytest.approx(1, abs=1e-12)
    assert np.trace(state.mat).real == pytest.approx(1, abs=1e-12)
    # weights follow the truncated series
    weights = np.array([(gamma / 2) ** n * (n + 1) for n in range(3)])
    pair = basis(PAIR, A_H=1, S_H=1)
    assert state.mat[pair, pair].real == pytest.approx(
        gamma / 2 / weights.sum(), abs=1e-12)


def test_coherent_state_basics():
    modes = ModeSet(["R"], cutoff=2)
    assert fock.coherent_state({}, modes).mat[0, 0] == pytest.approx(1)
    state = fock.coherent_state({"R": 0.3}, modes)
    assert (state.mat[1, 1] / state.mat[0, 0]).real == pytest.approx(0.09)
    assert fock.expect_photon_number(state, "R") == pytest.approx(0.09,
                                                                  rel=0.01)
    with pytest.raises(fock.UnknownMode):
        fock.coherent_state({"Q": 0.1}, modes)


def test_diagonal_pulse_single_photon_sector():
    modes = ModeSet(["R_H", "R_V"], cutoff=2)
    a = 0.3
    state = fock.coherent_state({"R_H": a / math.sqrt(2),
                                 "R_V": a / math.sqrt(2)}, modes)
    h, v = basis(modes, R_H=1), basis(modes, R_V=1)
    sector = state.mat[np.ix_([h, v], [h, v])]
    sector = sector / np.trace(sector)
    assert np.allclose(sector, np.full((2, 2), 0.5))


def test_loss_trivial_cases():
    modes = ModeSet(["a", "b"], cutoff=2)
    state = random_state(modes, 1)
    same = fock.apply_amp_loss(state, "a", 1.0)
    assert np.allclose(same.mat, state.mat)
    empty = fock.apply_amp_loss(state, "a", 0.0)
    assert fock.expect_photon_number(empty, "a") == pytest.approx(0)
    assert empty.norm == pytest.approx(state.norm)
    with pytest.raises(fock.NotPassive):
        fock.apply_amp_loss(state, "a", 1.01)


def test_loss_maps_coherent_to_coherent():
    # deep enough that truncating either coherent state is invisible
    modes = ModeSet(["a"], cutoff=16)
    alpha, t = 0.45 + 0.1j, 0.6 * np.exp(0.4j)
    lossy = fock.apply_amp_loss(fock.coherent_state({"a": alpha}, modes),
                                "a", t)
    expected = fock.coherent_state({"a": t * alpha}, modes)
    assert np.allclose(lossy.mat, expected.mat, atol=1e-9)


def test_loss_composes():
    modes = ModeSet(["a", "b"], cutoff=2)
    state = random_state(modes, 2)
    t1, t2 = 0.8 * np.exp(0.3j), 0.5 * np.exp(-1.2j)
    twice = fock.apply_amp_loss(fock.apply_amp_loss(state, "b", t1), "b", t2)
    once = fock.apply_amp_loss(state, "b", t1 * t2)
    assert np.allclose(twice.mat, once.mat, atol=1e-10)


def test_loss_scales_mean_photon_number():
    modes = ModeSet(["a"], cutoff=3)
    state = random_state(modes, 3)
    lossy = fock.apply_amp_loss(state, "a", math.sqrt(0.3))
    assert fock.expect_photon_number(lossy, "a") == pytest.approx(
        0.3 * fock.expect_photon_number(state, "a"))


def test_pbs_route_relabels_and_discards():
    modes = ModeSet(["S_H", "S_V"], cutoff=2)
    state = random_state(modes, 4)
    same = fock.pbs_route(state, {})
    assert np.allclose(same.mat, state.mat)

    swapped = fock.pbs_route(state, {"S_H": "B_H", "S_V": "B_V"})
    assert swapped.modes.labels == ("B_H", "B_V")
    assert swapped.norm == pytest.approx(state.norm)

    one = fock.single_photon_state({"S_V": 1}, modes)
    traced = fock.pbs_route(one, {"S_V": fock.DISCARD})
    assert traced.modes.labels == ("S_H",)
    assert traced.mat[0, 0] == pytest.approx(1)
    assert traced.norm == pytest.approx(1)
    kept = fock.pbs_route(one, {"S_V": fock.DISCARD}, postselect_vacuum=True)
    assert kept.norm == pytest.approx(0)

    with pytest.raises(fock.ModeCollision):
        fock.pbs_route(state, {"S_H": "S_V"})


def test_pbs_route_recombines_paths():
    modes = ModeSet(["A_H", "A_V", "S_H", "S_V"], cutoff=2)
    state = fock.single_photon_state({"S_H": 0.6, "S_V": 0.8j}, modes)
    routed = fock.pbs_route(state, {"S_H": "B_H", "S_V": "B_V"})
    h, v = basis(routed.modes, B_H=1), basis(routed.modes, B_V=1)
    assert routed.mat[h, h] == pytest.approx(0.36)
    assert routed.mat[h, v] == pytest.approx(0.6 * -0.8j)


def test_split_mode_mismatch_extremes():
    modes = ModeSet(["R"], cutoff=2)
    state = fock.coherent_state({"R": 0.3}, modes)
    full = fock.split_mode_mismatch(state, "R", "R", "R'", 1.0)
    assert full.modes.labels == ("R", "R'")
    assert fock.expect_photon_number(full, "R'") == pytest.approx(0)
    none = fock.split_mode_mismatch(state, "R", "R", "R'", 0.0)
    assert fock.expect_photon_number(none, "R") == pytest.approx(0)
    assert fock.expect_photon_number(none, "R'") == pytest.approx(
        fock.expect_photon_number(state, "R"))
    with pytest.raises(fock.InvalidVisibility):
        fock.split_mode_mismatch(state, "R", "R", "R'", 1.5)
    with pytest.raises(fock.ModeCollision):
        fock.split_mode_mismatch(full, "R", "R", "R'", 0.5)


def test_split_coherent_state_factorizes():
    modes = ModeSet(["R"], cutoff=6)
    alpha = 0.3 + 0.1j
    split = fock.split_mode_mismatch(fock.coherent_state({"R": alpha}, modes),
                                     "R", "M", "O", 0.8)
    expected = fock.coherent_state({"M": math.sqrt(0.8) * alpha,
                                    "O": math.sqrt(0.2) * alpha},
                                   modes.with_labels(["M", "O"]))
    assert split.modes.labels == ("M", "O")
    # the split state only fills total photon numbers up to the cutoff
    pair = split.modes
    sector = [basis(pair, M=m, O=n - m) for n in range(pair.cutoff + 1)
              for m in range(n + 1)]
    outside = np.setdiff1d(np.arange(pair.dim), sector)
    assert np.allclose(split.mat[outside][:, outside], 0, atol=1e-14)
    got = split.mat[np.ix_(sector, sector)]
    want = expected.mat[np.ix_(sector, sector)]
    assert np.allclose(got / np.trace(got), want / np.trace(want), atol=1e-9)


def test_threshold_click_basic():
    modes = ModeSet(["a"], cutoff=2)
    p, _ = fock.threshold_click_prob(fock.vacuum_state(modes), [["a"]])
    assert p == pytest.approx(0)
    one = fock.single_photon_state({"a": 1}, modes)
    p, conditioned = fock.threshold_click_prob(one, [["a"]])
    assert p == pytest.approx(1)
    assert conditioned.norm == pytest.approx(1)


def test_threshold_click_coherent_poisson():
    modes = ModeSet(["a"], cutoff=4)
    state = fock.coherent_state({"a": 0.3}, modes)
    p, conditioned = fock.threshold_click_prob(state, [["a"]])
    assert p == pytest.approx(1 - math.exp(-0.09), rel=1e-5)
    assert conditioned.norm == pytest.approx(p)
    assert conditioned.mat[0, 0] == pytest.approx(0, abs=1e-12)


def test_click_behind_polarizer():
    modes = ModeSet(["H", "V"], cutoff=2)
    s2 = 1 / math.sqrt(2)
    diagonal = fock.single_photon_state({"H": s2, "V": s2}, modes)
    p_d, _ = fock.threshold_click_prob(diagonal, [[{"H": s2, "V": s2}]])
    p_a, _ = fock.threshold_click_prob(diagonal, [[{"H": s2, "V": -s2}]])
    assert p_d == pytest.approx(1)
    assert p_a == pytest.approx(0, abs=1e-12)


def test_click_groups_must_be_disjoint():
    modes = ModeSet(["a", "b"], cutoff=2)
    with pytest.raises(fock.ModeCollision):
        fock.threshold_click_prob(fock.vacuum_state(modes), [["a"], ["a"]])
    with pytest.raises(fock.UnknownMode):
        fock.threshold_click_prob(fock.vacuum_state(modes), [["c"]])


def test_product_click_matches_joint_state():
    left = random_state(ModeSet(["x1", "x2"], cutoff=2), 5)
    right = fock.coherent_state({"y1": 0.4, "y2": 0.2j},
                                ModeSet(["y1", "y2"], cutoff=2))
    s2 = 1 / math.sqrt(2)
    groups = [[{"x1": s2, "y1": s2}, {"y2": 0.5}],
              ["x2"]]
    joint = fock.tensor_product(left, right)
    expected, _ = fock.threshold_click_prob(joint, groups)
    assert fock.product_click_prob([left, right], groups) == pytest.approx(
        expected, abs=1e-12)


def test_click_probability_monotone_in_source_strength():
    modes = ModeSet(["a"], cutoff=2)
    previous = 0.0
    for mu in (0.0, 0.01, 0.05, 0.09, 0.2):
        state = fock.coherent_state({"a": math.sqrt(mu)}, modes)
        p, _ = fock.threshold_click_prob(state, [["a"]])
        assert p >= previous - 1e-15
        previous = p

    previous = 0.0
    for gamma in (0.0, 1e-3, 2e-3, 1e-2):
        state = fock.spdc_state(SourceParams(gamma=gamma), PAIR)
        p, _ = fock.threshold_click_prob(state, [["A_H", "A_V"], ["S_H"]])
        assert p >= previous - 1e-15
        previous = p


def test_reduced_and_norm_bookkeeping():
    modes = ModeSet(["a", "b"], cutoff=2)
    state = fock.coherent_state({"a": 0.5, "b": 0.2}, modes)
    reduced = state.reduced(["b"])
    alone = fock.coherent_state({"b": 0.2}, modes.with_labels(["b"]))
    assert np.allclose(reduced.mat, alone.mat)
    _, clicked = fock.threshold_click_prob(state, [["a"]])
    _, both = fock.threshold_click_prob(clicked, [["b"]])
    assert both.norm <= clicked.norm <= state.norm
