"""
Pulse-level Monte Carlo of a source, a lossy channel and threshold detectors.

Pulses are simulated in fixed-size blocks. Block b draws from
Generator(Philox(key=seed).jumped(b)), so a tally depends only on the seed and
the number of pulses, never on how blocks are scheduled over processes.
"""
import logging
import math
from collections import namedtuple
from multiprocessing import Pool

import numpy as np

from .core_model import (ChannelObservables, SOURCE_KINDS, channel_observables,
                         check_fraction, make_params, photon_distribution,
                         yield_error_profile)
from .errors import ParameterError
from .pdc_model import ent_observables, triggering_observables

LOGGER = logging.getLogger('decoyqkd')
LOGGER.setLevel(logging.DEBUG)

SIM_MODES = ('channel', 'triggering', 'entangled')
DEFAULT_BLOCK_SIZE = 2 ** 20
MAX_SEED = 2 ** 64

SimConfig = namedtuple('SimConfig', [
    'source', 'intensity', 'eta', 'y0', 'e_d', 'n_pulses', 'seed',
    'eta_alice', 'y0_alice', 'block_size'])

SimTally = namedtuple('SimTally', [
    'pulses', 'detections', 'errors', 'double_clicks', 'triggers'])
SimTally.__new__.__defaults__ = (None,)

AgreementReport = namedtuple('AgreementReport', [
    'label', 'z_gain', 'z_error', 'flagged'])


def make_sim_config(source, intensity, eta, y0=0.0, e_d=0.0, n_pulses=10 ** 6, seed=0,
                    eta_alice=1.0, y0_alice=0.0, block_size=DEFAULT_BLOCK_SIZE):
    """
    Validated simulation configuration.

    Args:
        source:     Source kind, as for photon_distribution
                    (Type: str)

        intensity:  Mean photon (pair) number
                    (Type: float)

        eta:        Transmittance of Bob's side, detector included
                    (Type: float)

    Kwargs:
        y0:          Bob's background click probability
                     (Type: float)

        e_d:         Probability that a signal click lands in the wrong detector
                     (Type: float)

        n_pulses:    Number of pulses
                     (Type: int)

        seed:        Key of the counter-based generator, 0 <= seed < 2^64
                     (Type: int)

        eta_alice:   Efficiency of Alice's trigger or arm
                     (Type: float)

        y0_alice:    Alice's background click probability
                     (Type: float)

        block_size:  Pulses per block
                     (Type: int)

    Returns:
        cfg:  Simulation configuration
              (Type: SimConfig)
    """
    if source not in SOURCE_KINDS:
        err_msg = 'Unknown source kind "{}", expected one of {}'
        raise ParameterError(err_msg.format(source, ', '.join(SOURCE_KINDS)))
    if intensity < 0:
        raise ParameterError('intensity must be nonnegative, got {}'.format(intensity))
    for name, value in (('eta', eta), ('y0', y0), ('e_d', e_d),
                        ('eta_alice', eta_alice), ('y0_alice', y0_alice)):
        check_fraction(name, value)
    if n_pulses < 1:
        raise ParameterError('n_pulses must be at least 1, got {}'.format(n_pulses))
    if not 0 <= seed < MAX_SEED:
        raise ParameterError('seed must lie in [0, 2^64), got {}'.format(seed))
    if block_size < 1:
        raise ParameterError('block_size must be at least 1, got {}'.format(block_size))

    return SimConfig(source=source, intensity=float(intensity), eta=float(eta),
                     y0=float(y0), e_d=float(e_d), n_pulses=int(n_pulses), seed=int(seed),
                     eta_alice=float(eta_alice), y0_alice=float(y0_alice),
                     block_size=int(block_size))


def sim_params(cfg):
    """
    ExperimentParams whose analytic observables correspond to a simulation.
    """
    return make_params(name='simulation', eta_bob=1.0, eta_alice=cfg.eta_alice,
                       e_detector=cfg.e_d, y0=cfg.y0, y0_alice=cfg.y0_alice)


def _emissions(rng, cfg, n):
    mean = cfg.intensity
    if mean == 0:
        return np.zeros(n, dtype=np.int64)
    if cfg.source == 'coherent':
        return rng.poisson(mean, n)
    if cfg.source == 'pdc-pair':
        return rng.geometric(1.0 / (1.0 + mean), n) - 1
    return rng.negative_binomial(2, 1.0 / (1.0 + mean), n)


def _bob_clicks(rng, cfg, photons):
    """
    Detection and error flags for one block.

    The signal lands in the wrong detector with probability e_d and a
    background click in either detector with probability 1/2. When the two
    clicks land in different detectors the bit is a fair coin.
    """
    n = photons.shape[0]
    signal = rng.binomial(photons, cfg.eta) > 0
    background = rng.random(n) < cfg.y0
    signal_wrong = rng.random(n) < cfg.e_d
    background_wrong = rng.random(n) < 0.5
    coin = rng.random(n) < 0.5

    double = signal & background & (signal_wrong != background_wrong)
    wrong = np.where(signal, signal_wrong, background_wrong)
    wrong = np.where(double, coin, wrong)
    detected = signal | background
    return detected, wrong & detected, double


def _tally(detected, wrong, double, n):
    return SimTally(pulses=int(n), detections=int(detected.sum()),
                    errors=int(wrong.sum()), double_clicks=int(double.sum()))


def _run_block(args):
    cfg, mode, block, n = args
    rng = np.random.Generator(np.random.Philox(key=cfg.seed).jumped(block))
    photons = _emissions(rng, cfg, n)

    if mode == 'entangled':
        alice = (rng.binomial(photons, cfg.eta_alice) > 0) | (rng.random(n) < cfg.y0_alice)
        bob = (rng.binomial(photons, cfg.eta) > 0) | (rng.random(n) < cfg.y0)
        return SimTally(pulses=int(n), detections=int((alice & bob).sum()),
                        errors=None, double_clicks=0)

    if mode == 'triggering':
        trigger = (rng.binomial(photons, cfg.eta_alice) > 0) | (rng.random(n) < cfg.y0_alice)
        detected, wrong, double = _bob_clicks(rng, cfg, photons)
        triggers = tuple(_tally(detected & mask, wrong & mask, double & mask, n)
                         for mask in (~trigger, trigger))
        tally = _tally(detected, wrong, double, n)
        return tally._replace(triggers=triggers)

    return _tally(*_bob_clicks(rng, cfg, photons), n=n)


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def merge_tallies(tallies):
    """
    Sum tallies of disjoint pulse blocks.
    """
    tallies = list(tallies)
    if not tallies:
        raise ParameterError('nothing to merge')
    merged = tallies[0]
    for t in tallies[1:]:
        triggers = None
        if merged.triggers is not None:
            triggers = tuple(merge_tallies([x, y]) for x, y in zip(merged.triggers, t.triggers))
        merged = SimTally(pulses=merged.pulses + t.pulses,
                          detections=merged.detections + t.detections,
                          errors=_add(merged.errors, t.errors),
                          double_clicks=merged.double_clicks + t.double_clicks,
                          triggers=triggers)
    return merged


def _simulate(cfg, mode, jobs=1):
    if mode not in SIM_MODES:
        raise ParameterError('Unknown simulation mode "{}"'.format(mode))
    n_blocks = int(math.ceil(cfg.n_pulses / float(cfg.block_size)))
    args = []
    for block in range(n_blocks):
        n = min(cfg.block_size, cfg.n_pulses - block * cfg.block_size)
        args.append((cfg, mode, block, n))

    if jobs > 1 and n_blocks > 1:
        pool = Pool(processes=jobs)
        try:
            tallies = pool.map(_run_block, args)
        finally:
            pool.close()
            pool.join()
    else:
        tallies = [_run_block(a) for a in args]

    tally = merge_tallies(tallies)
    if tally.double_clicks:
        LOGGER.debug('{} double clicks in {} pulses'.format(tally.double_clicks, tally.pulses))
    return tally


def simulate_channel(cfg, jobs=1):
    """
    Simulate Bob's detections of a coherent or PDC-pair source.

    Returns:
        tally:  Pulses, detections, errors and double clicks
                (Type: SimTally)
    """
    if cfg.source == 'pdc-entangled-pair':
        raise ParameterError('use simulate_entangled for entangled pair sources')
    return _simulate(cfg, 'channel', jobs=jobs)


def simulate_triggering(cfg, jobs=1):
    """
    Simulate a heralded PDC source; Alice's threshold trigger splits the tally
    into non-triggered (j = 0) and triggered (j = 1) pulses.
    """
    if cfg.source != 'pdc-pair':
        raise ParameterError('triggering needs a pdc-pair source, got {}'.format(cfg.source))
    return _simulate(cfg, 'triggering', jobs=jobs)


def simulate_entangled(cfg, jobs=1):
    """
    Simulate coincidences of an entangled pair source; errors are not sampled.
    """
    if cfg.source != 'pdc-entangled-pair':
        err_msg = 'coincidences need a pdc-entangled-pair source, got {}'
        raise ParameterError(err_msg.format(cfg.source))
    return _simulate(cfg, 'entangled', jobs=jobs)


def _z_score(count, n, p):
    if p <= 0 or p >= 1:
        return 0.0 if count == p * n else float('inf')
    return float((count / float(n) - p) / np.sqrt(p * (1.0 - p) / n))


def agreement_check(tally, analytic, sigma=5.0, label=''):
    """
    Compare empirical gain and error gain with analytic values.

    Args:
        tally:     Simulated counts
                   (Type: SimTally)

        analytic:  Expected gain and QBER; a None qber skips the error check
                   (Type: ChannelObservables)

    Kwargs:
        sigma:  Number of binomial standard errors tolerated
                (Type: float)

        label:  Name of the checked point
                (Type: str)

    Returns:
        report:  z-scores and whether any exceeds sigma
                 (Type: AgreementReport)
    """
    z_gain = _z_score(tally.detections, tally.pulses, analytic.gain)
    z_error = None
    if tally.errors is not None and analytic.qber is not None:
        z_error = _z_score(tally.errors, tally.pulses, analytic.gain * analytic.qber)
    worst = max(abs(z_gain), abs(z_error) if z_error is not None else 0.0)
    flagged = worst > sigma
    if flagged:
        LOGGER.warning('Simulation disagrees at {}: z = {:.2f}'.format(label or 'point', worst))
    return AgreementReport(label=label, z_gain=z_gain, z_error=z_error, flagged=flagged)


def analytic_channel(cfg):
    params = sim_params(cfg)
    dist = photon_distribution(cfg.source, cfg.intensity)
    profile = yield_error_profile(params, cfg.eta, dist.n_cut)
    return channel_observables(params, dist, profile, mode='series')


def verify_suite(n_pulses=10 ** 6, seed=0, jobs=1, sigma=5.0, e_d=0.033):
    """
    Check the analytic models against simulation on a fixed grid: three
    sources, three transmittances and two background rates, plus per-trigger
    gains of a heralded source.

    Returns:
        reports:  One report per checked statistic group
                  (Type: list[AgreementReport])
    """
    reports = []
    intensities = {'coherent': 0.5, 'pdc-pair': 0.1, 'pdc-entangled-pair': 0.1}
    point = 0
    for source in SOURCE_KINDS:
        for eta in (0.5, 0.1, 0.01):
            for y0 in (0.0, 1e-5):
                label = '{} eta={} Y0={}'.format(source, eta, y0)
                cfg = make_sim_config(source, intensities[source], eta, y0=y0, e_d=e_d,
                                      n_pulses=n_pulses, seed=(seed + point) % MAX_SEED,
                                      eta_alice=eta, y0_alice=y0)
                point += 1
                if source == 'pdc-entangled-pair':
                    tally = simulate_entangled(cfg, jobs=jobs)
                    obs = ent_observables(sim_params(cfg), cfg.intensity, eta, eta, mode='series')
                    analytic = ChannelObservables(gain=obs.gain, qber=None)
                else:
                    tally = simulate_channel(cfg, jobs=jobs)
                    analytic = analytic_channel(cfg)
                reports.append(agreement_check(tally, analytic, sigma=sigma, label=label))

    # heralded source at 10 dB, trigger background neglected as in the model
    for eta_a in (0.145, 0.5):
        cfg = make_sim_config('pdc-pair', 0.1, 0.0145, y0=6.024e-6, e_d=0.015,
                              n_pulses=n_pulses, seed=(seed + point) % MAX_SEED,
                              eta_alice=eta_a)
        point += 1
        tally = simulate_triggering(cfg, jobs=jobs)
        per_trigger = triggering_observables(sim_params(cfg), cfg.intensity, cfg.eta)
        for j, sub in enumerate(tally.triggers):
            analytic = ChannelObservables(gain=float(per_trigger.gains[j]),
                                          qber=float(per_trigger.qbers[j]))
            label = 'trigger j={} eta_a={}'.format(j, eta_a)
            reports.append(agreement_check(sub, analytic, sigma=sigma, label=label))

    LOGGER.info('{} of {} checks flagged'.format(sum(r.flagged for r in reports), len(reports)))
    return reports
