"""
Command-line driver for the distribution simulator.

    python expcli.py run --config scenarios/depol_t100.ini --out out
    python expcli.py sweep-t --config scenarios/depol_t100.ini --jobs 4
    python expcli.py alpha-sweep --config scenarios/alpha_sweep.ini
    python expcli.py process-tomo --config scenarios/process_tomo.ini
    python expcli.py reciprocity-check --samples 1000 --seed 7
    python expcli.py validate --config scenarios/ideal.ini

Each scenario writes into <out>/<scenario id>/. Exit codes: 0 on
success, 2 for a bad configuration, 3 for a numerical failure.
The log level is read from DFS_SIM_LOG (default WARNING).
"""

import argparse
import configparser
import contextlib
import csv
import io
import json
import logging
import math
import multiprocessing as mp
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.stats import linregress

import fock
import polarization as pol
import protocol
import qmath
import tomography as tomo

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

LOG_FORMAT = "%(asctime)s [%(levelname)s] [%(name)s] %(message)s"

NUMERIC_ERRORS = (qmath.QMathError, fock.FockError, tomo.TomographyError,
                  FloatingPointError, np.linalg.LinAlgError)

SCHEMA = {
    "scenario": {"id", "seed", "cutoff", "tier"},
    "source": {"gamma", "mu", "alpha_sq", "visibility", "reference",
               "calibration_fidelity", "max_pairs"},
    "channel": {"mode", "transmittance", "upper", "lower", "upper_back",
                "lower_back", "collective", "reference_scaling",
                "haar_samples"},
    "tomography": {"shots", "bootstrap"},
    "sweep": {"t_values", "alpha_sq_values"},
    "output": {"rep_rate_hz"},
}

DEFAULT_T_VALUES = (1.0, 0.48, 0.17)
DEFAULT_ALPHA_SQ_VALUES = tuple(round(0.1 * k, 1) for k in range(1, 10))


class ConfigError(Exception):
    pass


class NeedTwoPoints(Exception):
    pass


@dataclass
class ScenarioConfig:
    """Everything a scenario file specifies, in validated form."""

    scenario_id: str
    source: fock.SourceParams
    seed: int = 0
    cutoff: int = fock.DEFAULT_CUTOFF
    tier: str = "full"
    calibrate: bool = False
    calibration_fidelity: float = 0.85
    reference: str = "coherent"
    channel_mode: str = "depolarizing"
    transmittance: float = 1.0
    upper: pol.WaveplateSetting = pol.WaveplateSetting(0, 0, 0)
    lower: pol.WaveplateSetting = pol.WaveplateSetting(0, 0, 0)
    upper_back: Optional[pol.WaveplateSetting] = None
    lower_back: Optional[pol.WaveplateSetting] = None
    collective: bool = True
    reference_scaling: bool = True
    haar_samples: int = 64
    shots: Optional[int] = None
    bootstrap: int = 0
    t_values: tuple = DEFAULT_T_VALUES
    alpha_sq_values: tuple = DEFAULT_ALPHA_SQ_VALUES
    rep_rate_hz: float = protocol.REP_RATE_HZ
    text: str = ""

    def modes(self):
        return protocol.default_modes(self.cutoff)


@dataclass
class ResultRecord:
    """Numbers reported for one evaluated scenario point."""

    scenario_id: str
    transmittance: float
    success_prob: float
    rate_hz: float
    fidelity: Optional[float]
    purity: Optional[float]
    concurrence: Optional[float]
    eof: Optional[float]
    visibility: float
    shots: Optional[int] = None
    alpha_sq: Optional[float] = None
    errors: dict = field(default_factory=dict)


def _field(section, key):
    return "[" + section + "] " + key


def _get(parser, section, key, convert, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key).strip()
    try:
        return convert(raw)
    except ValueError as e:
        raise ConfigError(_field(section, key) + ": " + str(e))


def _bool(raw):
    value = raw.lower()
    if value in ("1", "yes", "true", "on"):
        return True
    if value in ("0", "no", "false", "off"):
        return False
    raise ValueError("expected a boolean, got '" + raw + "'")


def _floats(raw):
    return tuple(float(v) for v in raw.replace(",", " ").split())


def _choice(options):
    def convert(raw):
        if raw not in options:
            raise ValueError("expected one of " + ", ".join(options)
                             + ", got '" + raw + "'")
        return raw
    return convert


def _shots(raw):
    if raw == "exact":
        return None
    value = int(raw)
    if value < 1:
        raise ValueError("shots must be positive or 'exact'")
    return value


def parse_config(text, overrides=None):
    """
    Parse and validate a scenario file.

    Parameters
    ----------
    text : str
        INI text.
    overrides : dict or None
        Values from the command line: seed, cutoff, shots (None for
        exact), keyed by ScenarioConfig field name.

    Return
    ------
    ScenarioConfig
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError("unreadable config: " + str(e).splitlines()[0])

    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError("unknown section [" + section + "]")
        for key in parser.options(section):
            if key not in SCHEMA[section]:
                raise ConfigError(_field(section, key) + ": unknown key")

    if not parser.has_option("scenario", "id"):
        raise ConfigError(_field("scenario", "id") + ": missing")
    scenario_id = parser.get("scenario", "id").strip()
    if not scenario_id or os.sep in scenario_id:
        raise ConfigError(_field("scenario", "id") + ": must be a plain name")

    visibility_raw = _get(parser, "source", "visibility", str, "1.0")
    calibrate = visibility_raw == "calibrate"
    visibility = 1.0 if calibrate else _get(parser, "source", "visibility",
                                            float, 1.0)

    alpha_sq = _get(parser, "source", "alpha_sq", float, 0.5)
    max_pairs = _get(parser, "source", "max_pairs", int, None)
    try:
        source = fock.SourceParams.from_alpha_sq(
            alpha_sq,
            gamma=_get(parser, "source", "gamma", float, 2e-3),
            mu=_get(parser, "source", "mu", float, 0.09),
            visibility=visibility,
            max_pairs=max_pairs)
    except ValueError as e:
        raise ConfigError("[source] " + str(e))

    def setting(key, default):
        return _get(parser, "channel", key, pol.parse_setting, default)

    values = dict(
        scenario_id=scenario_id,
        source=source,
        seed=_get(parser, "scenario", "seed", int, 0),
        cutoff=_get(parser, "scenario", "cutoff", int, fock.DEFAULT_CUTOFF),
        tier=_get(parser, "scenario", "tier", _choice(("ideal", "full")),
                  "full"),
        calibrate=calibrate,
        calibration_fidelity=_get(parser, "source", "calibration_fidelity",
                                  float, 0.85),
        reference=_get(parser, "source", "reference",
                       _choice(("coherent", "single_photon")), "coherent"),
        channel_mode=_get(parser, "channel", "mode",
                          _choice(("fixed", "depolarizing", "haar")),
                          "depolarizing"),
        transmittance=_get(parser, "channel", "transmittance", float, 1.0),
        upper=setting("upper", pol.WaveplateSetting(0, 0, 0)),
        lower=setting("lower", pol.WaveplateSetting(0, 0, 0)),
        upper_back=setting("upper_back", None),
        lower_back=setting("lower_back", None),
        collective=_get(parser, "channel", "collective", _bool, True),
        reference_scaling=_get(parser, "channel", "reference_scaling", _bool,
                               True),
        haar_samples=_get(parser, "channel", "haar_samples", int, 64),
        shots=_get(parser, "tomography", "shots", _shots, None),
        bootstrap=_get(parser, "tomography", "bootstrap", int, 0),
        t_values=_get(parser, "sweep", "t_values", _floats, DEFAULT_T_VALUES),
        alpha_sq_values=_get(parser, "sweep", "alpha_sq_values", _floats,
                             DEFAULT_ALPHA_SQ_VALUES),
        rep_rate_hz=_get(parser, "output", "rep_rate_hz", float,
                         protocol.REP_RATE_HZ),
        text=text,
    )
    values.update(overrides or {})
    cfg = ScenarioConfig(**values)
    _check(cfg)

    return cfg


def _check_backward(cfg):
    given = [k for k in ("upper_back", "lower_back")
             if getattr(cfg, k) is not None]
    if given and cfg.channel_mode != "fixed":
        raise ConfigError(_field("channel", given[0])
                          + ": only used with mode = fixed")
    if given and cfg.collective:
        raise ConfigError(_field("channel", given[0])
                          + ": a collective channel repeats the forward "
                            "setting, set collective = no")
    if cfg.channel_mode == "fixed" and not cfg.collective and not given:
        raise ConfigError(_field("channel", "collective")
                          + ": a fixed channel with collective = no needs "
                            "upper_back or lower_back")


def _check(cfg):
    if cfg.cutoff < 1:
        raise ConfigError(_field("scenario", "cutoff") + ": must be >= 1")
    if cfg.tier == "full" and cfg.cutoff < 2:
        raise ConfigError(_field("scenario", "cutoff")
                          + ": the full tier needs cutoff >= 2")
    if not 0 <= cfg.transmittance <= 1:
        raise ConfigError(_field("channel", "transmittance")
                          + ": must lie in [0, 1]")
    _check_backward(cfg)
    if not 0 < cfg.calibration_fidelity < 1:
        raise ConfigError(_field("source", "calibration_fidelity")
                          + ": must lie in (0, 1)")
    if cfg.haar_samples < 1:
        raise ConfigError(_field("channel", "haar_samples") + ": must be >= 1")
    if cfg.bootstrap < 0 or cfg.bootstrap == 1:
        raise ConfigError(_field("tomography", "bootstrap")
                          + ": must be 0 or at least 2")
    if any(not 0 < t <= 1 for t in cfg.t_values):
        raise ConfigError(_field("sweep", "t_values")
                          + ": values must lie in (0, 1]")
    if any(not 0 <= a <= 1 for a in cfg.alpha_sq_values):
        raise ConfigError(_field("sweep", "alpha_sq_values")
                          + ": values must lie in [0, 1]")
    if cfg.rep_rate_hz <= 0:
        raise ConfigError(_field("output", "rep_rate_hz") + ": must be > 0")


def load_config(path, overrides=None):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError("cannot read " + str(path) + ": " + e.strerror)
    return parse_config(text, overrides)


def _atomic_write(path, write):
    # write(tmp_path) fills a temporary file that then replaces path
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def _write_text(path, text):
    def write(tmp):
        with open(tmp, "w", newline="") as f:
            f.write(text)
    _atomic_write(path, write)


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _write_rows(path, header, rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _write_text(path, buffer.getvalue())


def _scenario_dir(out, cfg):
    path = os.path.join(out, cfg.scenario_id)
    os.makedirs(path, exist_ok=True)
    _write_text(os.path.join(path, "config.ini"), cfg.text)
    return path


@contextlib.contextmanager
def _mapper(jobs):
    if jobs > 1:
        with mp.Pool(jobs) as pool:
            yield pool.map
    else:
        yield map


def resolve_visibility(cfg, mapper=map):
    """
    Return the config with the calibrated visibility filled in.
    """
    if not cfg.calibrate or cfg.tier != "full":
        return cfg
    v = protocol.calibrate_visibility(
        cfg.source, cfg.modes(), target=cfg.calibration_fidelity,
        transmittance=1.0, reference_scaling=cfg.reference_scaling,
        mapper=mapper)
    return replace(cfg, source=replace(cfg.source, visibility=v),
                   calibrate=False)


def _ideal_outcome(success, state):
    if state is None:
        return protocol.ProtocolOutcome(0.0, None,
                                        {s: 0.0 for s in tomo.ALL_SETTINGS})
    table = {s: success * p for s, p in tomo.exact_probabilities(state).items()}
    return protocol.ProtocolOutcome(success, state, table)


def evaluate(cfg, mapper=map):
    """
    Run the configured tier and channel ensemble.

    Return
    ------
    ProtocolOutcome
    """
    T = cfg.transmittance
    src = cfg.source
    logger.info("evaluating %s: tier=%s mode=%s T=%g", cfg.scenario_id,
                cfg.tier, cfg.channel_mode, T)

    if cfg.tier == "ideal":
        if cfg.channel_mode == "fixed":
            ops = _fixed_channel(cfg).operators()
            return protocol.run_ideal(ops.mf, ops.nf, src.alpha, src.beta,
                                      ops.mb, ops.nb)
        if cfg.channel_mode == "depolarizing":
            return _ideal_outcome(*protocol.depolarizing_average_ideal(
                T, cfg.collective, src.alpha, src.beta))
        return _ideal_outcome(*protocol.haar_average_ideal(
            T, cfg.haar_samples, cfg.seed, cfg.collective, src.alpha,
            src.beta))

    single = cfg.reference == "single_photon"
    if cfg.channel_mode == "fixed":
        return protocol.run_full(src, _fixed_channel(cfg), cfg.modes(),
                                 cfg.reference_scaling, single)
    if cfg.channel_mode == "depolarizing":
        return protocol.depolarizing_average_full(
            src, T, cfg.modes(), cfg.collective, cfg.reference_scaling,
            single, mapper=mapper)
    return protocol.haar_average_full(src, T, cfg.haar_samples, cfg.seed,
                                      cfg.modes(), cfg.collective,
                                      cfg.reference_scaling, mapper=mapper)


def _fixed_channel(cfg):
    # a missing backward setting repeats the forward one
    return protocol.ChannelConfig(cfg.upper, cfg.lower, cfg.transmittance,
                                  cfg.upper_back, cfg.lower_back)


def measure(cfg, outcome, seed_seq):
    """
    Turn a protocol outcome into a ResultRecord, sampling counts and
    reconstructing by MLE when the config asks for finite shots.

    Return
    ------
    record : ResultRecord
    counts : [CountRecord] or None
    """
    target = protocol.target_state(cfg.source.alpha, cfg.source.beta)
    sample_seed, boot_seed = seed_seq.spawn(2)
    record = ResultRecord(
        scenario_id=cfg.scenario_id,
        transmittance=cfg.transmittance,
        success_prob=outcome.success_prob,
        rate_hz=protocol.rate_hz(outcome.success_prob, cfg.rep_rate_hz),
        fidelity=None, purity=None, concurrence=None, eof=None,
        visibility=cfg.source.visibility,
        shots=cfg.shots)

    if outcome.rho_out is None:
        logger.warning("%s: heralding event has probability zero",
                       cfg.scenario_id)
        return record, None

    counts = None
    rho = outcome.rho_out
    if cfg.shots is not None:
        probs = tomo.conditional_probabilities(outcome.click_table)
        counts = tomo.sample_counts(probs, cfg.shots, sample_seed)
        rho = tomo.mle_state(counts)
        if cfg.bootstrap:
            record.errors = tomo.bootstrap_errors(counts, target, boot_seed,
                                                  cfg.bootstrap)

    for key, value in tomo.state_summary(rho, target).items():
        setattr(record, key, value)

    return record, counts


def fit_exponent(xs, ys):
    """
    Least-squares slope of log(y) against log(x).

    Return
    ------
    slope : float
    stderr : float
    intercept : float
        Natural log of the fitted y at x = 1.
    """
    points = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0]
    if len(points) < 2:
        raise NeedTwoPoints("need at least two points with positive values, "
                            "got " + str(len(points)))
    lx = np.log([p[0] for p in points])
    ly = np.log([p[1] for p in points])
    if len(points) == 2:
        slope = (ly[1] - ly[0]) / (lx[1] - lx[0])
        return float(slope), 0.0, float(ly[0] - slope * lx[0])
    fit = linregress(lx, ly)
    return float(fit.slope), float(fit.stderr), float(fit.intercept)


def cmd_run(cfg, out, jobs=1):
    with _mapper(jobs) as mapper:
        cfg = resolve_visibility(cfg, mapper)
        outcome = evaluate(cfg, mapper)
    record, counts = measure(cfg, outcome, np.random.SeedSequence(cfg.seed))

    path = _scenario_dir(out, cfg)
    _write_json(os.path.join(path, "results.json"), asdict(record))
    if counts is not None:
        _atomic_write(os.path.join(path, "counts.csv"),
                      lambda tmp: tomo.write_counts_csv(tmp, counts))
    logger.info("%s: success %.4g fidelity %s", cfg.scenario_id,
                record.success_prob, record.fidelity)

    return record


def _sweep_point(job):
    cfg, seed_seq = job
    record, _ = measure(cfg, evaluate(cfg), seed_seq)
    return record


def _run_points(cfgs, seed, jobs):
    seeds = np.random.SeedSequence(seed).spawn(len(cfgs))
    with _mapper(jobs) as mapper:
        return list(mapper(_sweep_point, list(zip(cfgs, seeds))))


def cmd_sweep_t(cfg, out, jobs=1, t_values=None):
    """
    Evaluate the scenario at several transmittances and fit the
    exponent of rate against T.
    """
    t_values = tuple(cfg.t_values if t_values is None else t_values)
    if len(t_values) < 2:
        raise NeedTwoPoints("sweep-t needs at least two transmittances")

    with _mapper(jobs) as mapper:
        cfg = resolve_visibility(cfg, mapper)
    records = _run_points([replace(cfg, transmittance=t) for t in t_values],
                          cfg.seed, jobs)

    rates = [r.rate_hz for r in records]
    slope, stderr, intercept = fit_exponent(t_values, rates)

    # forward-reference scheme: T^2 through rate(1) / (2 mu)
    mu = cfg.source.mu
    anchor = math.exp(intercept) / (2 * mu) if mu > 0 else None
    comparison = [anchor * t ** 2 if anchor else None for t in t_values]

    path = _scenario_dir(out, cfg)
    _write_rows(os.path.join(path, "sweep_t.csv"),
                ["transmittance", "success_prob", "rate_hz", "fidelity",
                 "purity", "eof", "forward_reference_rate_hz"],
                [[r.transmittance, r.success_prob, r.rate_hz, r.fidelity,
                  r.purity, r.eof, c] for r, c in zip(records, comparison)])
    summary = {"scenario_id": cfg.scenario_id,
               "exponent": slope,
               "exponent_stderr": stderr,
               "forward_reference_exponent": 2.0,
               "points": [asdict(r) for r in records]}
    _write_json(os.path.join(path, "results.json"), summary)
    logger.info("%s: rate ~ T^%.3f +- %.3f", cfg.scenario_id, slope, stderr)

    return summary


def cmd_alpha_sweep(cfg, out, jobs=1, alpha_sq_values=None):
    """
    Fidelity between emitted and shared state across pair amplitudes.
    """
    values = tuple(cfg.alpha_sq_values if alpha_sq_values is None
                   else alpha_sq_values)
    with _mapper(jobs) as mapper:
        cfg = resolve_visibility(cfg, mapper)

    cfgs = []
    for a in values:
        src = fock.SourceParams.from_alpha_sq(
            a, gamma=cfg.source.gamma, mu=cfg.source.mu,
            visibility=cfg.source.visibility,
            max_pairs=cfg.source.max_pairs)
        cfgs.append(replace(cfg, source=src))
    records = _run_points(cfgs, cfg.seed, jobs)

    rows = []
    for a, c, r in zip(values, cfgs, records):
        r.alpha_sq = a
        initial = tomo.eof(protocol.target_state(c.source.alpha,
                                                 c.source.beta))
        rows.append([a, r.fidelity, initial, r.eof, r.success_prob])

    fidelities = [r.fidelity for r in records if r.fidelity is not None]
    path = _scenario_dir(out, cfg)
    _write_rows(os.path.join(path, "alpha_sweep.csv"),
                ["alpha_sq", "fidelity", "eof_initial", "eof_final",
                 "success_prob"], rows)
    summary = {"scenario_id": cfg.scenario_id,
               "min_fidelity": min(fidelities) if fidelities else None,
               "points": [asdict(r) for r in records]}
    _write_json(os.path.join(path, "results.json"), summary)

    return summary


def _process_settings(cfg):
    if cfg.channel_mode == "fixed":
        return [cfg.upper]
    if cfg.channel_mode == "depolarizing":
        return [pol.pauli_setting(p) for p in pol.PauliLabel]
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    return [pol.random_setting(rng) for _ in range(cfg.haar_samples)]


def _reconstruct_chi(choi, cfg, seed_seq):
    probs = tomo.exact_probabilities(choi)
    if cfg.shots is None:
        estimate = tomo.linear_inversion(probs)
    else:
        estimate = tomo.mle_state(tomo.sample_counts(probs, cfg.shots,
                                                     seed_seq))
    return tomo.chi_from_choi(estimate)


def _chi_rows(chi):
    rows = []
    for m, row in enumerate(tomo.PAULI_LABELS):
        for n, col in enumerate(tomo.PAULI_LABELS):
            value = chi.mat[m, n]
            rows.append([row, col, float(value.real), float(value.imag)])
    return rows


def cmd_process_tomo(cfg, out):
    """
    Process matrices of the channel ensemble in both directions,
    probed with half of an ideal |phi+>.
    """
    settings = _process_settings(cfg)
    forward_seed, backward_seed = np.random.SeedSequence(cfg.seed).spawn(2)

    forward = _reconstruct_chi(
        tomo.choi_state([pol.forward_op(s) for s in settings]), cfg,
        forward_seed)
    backward = _reconstruct_chi(
        tomo.choi_state([pol.backward_op(s) for s in settings]), cfg,
        backward_seed)

    path = _scenario_dir(out, cfg)
    header = ["row", "col", "real", "imag"]
    _write_rows(os.path.join(path, "chi_forward.csv"), header,
                _chi_rows(forward))
    _write_rows(os.path.join(path, "chi_backward.csv"), header,
                _chi_rows(backward))

    summary = {"scenario_id": cfg.scenario_id,
               "forward_diagonal": [float(v) for v in
                                    np.real(np.diag(forward.mat))],
               "backward_diagonal": [float(v) for v in
                                     np.real(np.diag(backward.mat))],
               "forward_dominant": list(forward.dominant()),
               "backward_dominant": list(backward.dominant())}
    _write_json(os.path.join(path, "results.json"), summary)

    return forward, backward


def reciprocity_residual(forward, backward):
    expected = pol.reciprocal_conjugate(forward)
    return float(np.max(np.abs(backward.mat - expected.mat)))


def cmd_reciprocity_check(samples, seed, faraday=None, threshold=1e-9):
    """
    Compare backward_op with Z forward_op^T Z on random and Pauli
    settings.

    Parameters
    ----------
    samples : int
    seed : int
    faraday : float or None
        Rotation angle of a non-reciprocal rotator placed after every
        waveplate stack, as a negative control.
    threshold : float
        Residuals above it are flagged.

    Return
    ------
    dict
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")

    rng = np.random.Generator(np.random.Philox(seed))
    settings = [pol.random_setting(rng) for _ in range(samples)]
    pauli = [pol.pauli_setting(p) for p in pol.PauliLabel]

    def residual(s):
        forward, backward = pol.forward_op(s), pol.backward_op(s)
        if faraday is not None:
            rot_f, rot_b = pol.faraday_rotator(faraday)
            forward, backward = rot_f @ forward, backward @ rot_b
        return reciprocity_residual(forward, backward)

    random_max = max(residual(s) for s in settings)
    pauli_max = max(residual(s) for s in pauli)
    report = {"samples": samples,
              "seed": seed,
              "faraday": faraday,
              "max_residual": random_max,
              "pauli_max_residual": pauli_max,
              "flagged": max(random_max, pauli_max) > threshold}
    if report["flagged"]:
        logger.warning("reciprocity violated: residual %.3g", random_max)

    return report


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario INI file")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, help="override [scenario] seed")
    common.add_argument("--jobs", type=int, default=1,
                        help="worker processes")
    common.add_argument("--cutoff", type=int,
                        help="override photon-number cutoff")
    shots = common.add_mutually_exclusive_group()
    shots.add_argument("--exact", action="store_true",
                       help="use exact probabilities")
    shots.add_argument("--shots", type=int,
                       help="sample this many counts per setting")

    parser = argparse.ArgumentParser(
        description="Simulate entanglement distribution with a "
                    "counter-propagating reference.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep-t", "alpha-sweep", "process-tomo",
                 "validate"):
        sub.add_parser(name, parents=[common])
    check = sub.add_parser("reciprocity-check", parents=[common])
    check.add_argument("--samples", type=int, default=1000)
    check.add_argument("--faraday", type=float,
                       help="inject a non-reciprocal rotation (radians)")

    return parser


def _overrides(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.cutoff is not None:
        overrides["cutoff"] = args.cutoff
    if args.exact:
        overrides["shots"] = None
    elif args.shots is not None:
        if args.shots < 1:
            raise ConfigError("--shots must be positive")
        overrides["shots"] = args.shots
    return overrides


def configure_logging():
    level = os.environ.get("DFS_SIM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format=LOG_FORMAT)


def main(argv=None):
    configure_logging()
    args = build_parser().parse_args(argv)

    if args.command == "reciprocity-check":
        try:
            seed = 0 if args.seed is None else args.seed
            report = cmd_reciprocity_check(args.samples, seed, args.faraday)
        except ValueError as e:
            print("error: " + str(e), file=sys.stderr)
            return EXIT_CONFIG
        print(json.dumps(report, sort_keys=True))
        return EXIT_OK

    if args.config is None:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG

    try:
        cfg = load_config(args.config, _overrides(args))
    except (ConfigError, ValueError) as e:
        print("config error: " + str(e), file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        print(cfg.scenario_id + ": ok")
        return EXIT_OK

    try:
        if args.command == "run":
            cmd_run(cfg, args.out, args.jobs)
        elif args.command == "sweep-t":
            cmd_sweep_t(cfg, args.out, args.jobs)
        elif args.command == "alpha-sweep":
            cmd_alpha_sweep(cfg, args.out, args.jobs)
        elif args.command == "process-tomo":
            cmd_process_tomo(cfg, args.out)
    except NeedTwoPoints as e:
        print("config error: " + str(e), file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as e:
        logger.error("numerical failure: %s", e)
        print("numerical error: " + str(e), file=sys.stderr)
        return EXIT_NUMERIC

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
