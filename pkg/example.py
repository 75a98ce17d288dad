# Example file for the distribution simulator.
# The full-model calls take a few seconds each.

import numpy as np

import fock
import polarization as pol
import protocol
import tomography as tomo
import expcli


# one fixed channel in the single-photon model:
# the upper fibre acts as Z, the lower one as X, both lose half the light
cfg = protocol.ChannelConfig(pol.parse_setting("45, 0, 45 deg"),
                             pol.pauli_setting("X"),
                             transmittance=0.5)
ops = cfg.operators()
outcome = protocol.run_ideal(ops.mf, ops.nf, mb=ops.mb, nb=ops.nb)
print(outcome.success_prob, outcome.fidelity(protocol.target_state()))
# the fidelity stays 1 whenever the success probability is above zero


# the same channel with photon pairs, a weak coherent reference
# and imperfect mode matching
src = fock.SourceParams(gamma=2e-3, mu=0.09, visibility=0.9)
outcome = protocol.run_full(src, cfg)
print(tomo.state_summary(outcome.rho_out, protocol.target_state()))
# outcome.click_table holds the coincidence probability of every
# tomography setting; outcome.rho_out is the state reconstructed from it


# average over the depolarizing ensemble of Pauli settings
# pass mapper=pool.map from a multiprocessing.Pool to spread the settings
mixed = protocol.depolarizing_average_full(src, 0.48)
print(mixed.success_prob, protocol.rate_hz(mixed.success_prob))


# find the visibility at which the T = 1 fidelity is 0.85
v = protocol.calibrate_visibility(src, target=0.85)


# sampled tomography: counts per setting, then maximum likelihood
probs = tomo.conditional_probabilities(mixed.click_table)
counts = tomo.sample_counts(probs, shots=10000, seed=1)
rho = tomo.mle_state(counts)
errors = tomo.bootstrap_errors(counts, protocol.target_state(), seed=2,
                               n_boot=50)
# errors has the standard deviations of fidelity, purity,
# concurrence and entanglement of formation


# process matrix of a channel probed with half of a Bell pair
choi = tomo.choi_state([pol.forward_op(pol.random_setting(
    np.random.default_rng(3)))])
chi = tomo.chi_from_choi(tomo.linear_inversion(tomo.exact_probabilities(choi)))
print(chi.dominant())


# scenario files go through expcli; this is what `expcli.py run` does
scenario = expcli.load_config("scenarios/ideal.ini")
record = expcli.cmd_run(scenario, "out")
