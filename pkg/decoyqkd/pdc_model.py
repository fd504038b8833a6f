"""
Photon-pair sources: triggered (heralded) PDC and entangled PDC.

Only single-mode PDC is modelled. For the triggered source the trigger
detector sits at Alice and Bob sees the idler photons through the channel.
"""
import logging
from collections import namedtuple

import numpy as np

from .core_model import (ChannelObservables, DEFAULT_N_CUT, photon_distribution,
                         photon_transmittance, yield_error_profile, check_fraction)
from .errors import ParameterError, UnsupportedModeError

LOGGER = logging.getLogger('decoyqkd')
LOGGER.setLevel(logging.DEBUG)

RESPONSE_KINDS = ('threshold', 'perfect-pnr')
ARM_GEOMETRIES = ('middle', 'alice')

TriggerResponse = namedtuple('TriggerResponse', ['kind', 'eta_a', 'matrix'])

TriggeredObservables = namedtuple('TriggeredObservables', [
    'response_kind', 'mu', 'gains', 'qbers', 'q0', 'q1', 'y1', 'e1'])

TriggerComponents = namedtuple('TriggerComponents', ['q10', 'q11', 'e1', 'q00', 'q01'])

PairProfile = namedtuple('PairProfile', ['eta_a', 'eta_b', 'y', 'e'])


def trigger_response(kind, eta_a, n_cut=None, y0_alice=0.0):
    """
    Probability eta_{j|i} that Alice's trigger reports j given i incident photons.

    Args:
        kind:   'threshold' or 'perfect-pnr'
                (Type: str)

        eta_a:  Efficiency of Alice's trigger detector
                (Type: float)

    Kwargs:
        n_cut:     Largest incident photon number
                   (Type: int)

        y0_alice:  Dark count probability of the trigger. Zero by default,
                   i.e. the trigger background is neglected next to eta_a.
                   (Type: float)

    Returns:
        response:  matrix[j, i] holds eta_{j|i}
                   (Type: TriggerResponse)
    """
    check_fraction('eta_a', eta_a)
    check_fraction('y0_alice', y0_alice)
    if n_cut is None:
        n_cut = DEFAULT_N_CUT['pdc-pair']

    if kind == 'threshold':
        silent = (1.0 - y0_alice) * (1.0 - photon_transmittance(eta_a, n_cut))
        matrix = np.vstack([silent, 1.0 - silent])
    elif kind == 'perfect-pnr':
        matrix = np.eye(n_cut + 1)
    else:
        err_msg = 'Unknown trigger response "{}", expected one of {}'
        raise UnsupportedModeError(err_msg.format(kind, ', '.join(RESPONSE_KINDS)))

    matrix.setflags(write=False)
    return TriggerResponse(kind=kind, eta_a=float(eta_a), matrix=matrix)


def _single_photon_truth(params, mu, eta_channel):
    p1 = mu / (1.0 + mu) ** 2
    y0 = params.y0
    y1 = y0 + eta_channel - y0 * eta_channel
    e1y1 = params.e_detector * y1 + (params.e0 - params.e_detector) * y0
    e1 = e1y1 / y1 if y1 > 0 else params.e0
    return p1, y1, e1


def _threshold_closed(params, mu, eta_channel):
    eta_a = params.eta_alice
    y0 = params.y0
    e_d = params.e_detector
    e0 = params.e0

    untriggered = 1.0 / (1.0 + eta_a * mu)
    both = 1.0 / (1.0 + (eta_a + eta_channel - eta_a * eta_channel) * mu)
    any_idler = 1.0 / (1.0 + eta_channel * mu)

    q_0 = untriggered - (1.0 - y0) * both
    q_1 = 1.0 - untriggered - (1.0 - y0) * any_idler + (1.0 - y0) * both
    eq_0 = e_d * q_0 + (e0 - e_d) * y0 * untriggered
    eq_1 = e_d * q_1 + (e0 - e_d) * eta_a * mu * y0 * untriggered
    return np.array([q_0, q_1]), np.array([eq_0, eq_1])


def _series(params, mu, eta_channel, response, n_cut):
    dist = photon_distribution('pdc-pair', mu, n_cut)
    profile = yield_error_profile(params, eta_channel, n_cut, exclusive_background=True)
    weights = response.matrix * dist.probs
    gains = weights.dot(profile.y)
    error_gains = weights.dot(profile.e * profile.y)
    return gains, error_gains, dist, profile


def triggering_observables(params, mu, eta_channel, response='threshold',
                           mode='closed', n_cut=None):
    """
    Gains and QBERs of Bob's detections sorted by Alice's trigger outcome.

    Args:
        params:       Setup parameters; eta_alice is the trigger efficiency
                      (Type: ExperimentParams)

        mu:           Mean photon pair number
                      (Type: float)

        eta_channel:  Overall transmittance on Bob's side
                      (Type: float)

    Kwargs:
        response:  'threshold' or 'perfect-pnr'
                   (Type: str)

        mode:      'closed' or 'series'
                   (Type: str)

        n_cut:     Truncation of the series
                   (Type: int)

    Returns:
        obs:  Per trigger outcome gains and QBERs, plus the model's vacuum and
              single-photon components per outcome
              (Type: TriggeredObservables)
    """
    if mu < 0:
        raise ParameterError('mu must be nonnegative, got {}'.format(mu))
    check_fraction('eta_channel', eta_channel)
    if response not in RESPONSE_KINDS:
        err_msg = 'Unknown trigger response "{}", expected one of {}'
        raise UnsupportedModeError(err_msg.format(response, ', '.join(RESPONSE_KINDS)))
    if mode not in ('closed', 'series'):
        raise UnsupportedModeError('Unknown observable mode "{}"'.format(mode))
    if n_cut is None:
        n_cut = DEFAULT_N_CUT['pdc-pair']

    p1, y1, e1 = _single_photon_truth(params, mu, eta_channel)
    p0 = 1.0 / (1.0 + mu)

    if response == 'threshold':
        if mode == 'closed':
            gains, error_gains = _threshold_closed(params, mu, eta_channel)
        else:
            resp = trigger_response('threshold', params.eta_alice, n_cut)
            gains, error_gains = _series(params, mu, eta_channel, resp, n_cut)[:2]
        eta_a = params.eta_alice
        q0 = np.array([p0 * params.y0, 0.0])
        q1 = np.array([p1 * (1.0 - eta_a) * y1, p1 * eta_a * y1])
    else:
        # a perfect number-resolving trigger gives Q_{mu,i} = P(i) Y_i
        resp = trigger_response('perfect-pnr', 1.0, n_cut)
        gains, error_gains = _series(params, mu, eta_channel, resp, n_cut)[:2]
        q0 = np.zeros(n_cut + 1)
        q0[0] = gains[0]
        q1 = np.zeros(n_cut + 1)
        q1[1] = gains[1]

    with np.errstate(divide='ignore', invalid='ignore'):
        qbers = np.where(gains > 0, error_gains / gains, params.e0)

    return TriggeredObservables(response_kind=response, mu=float(mu),
                                gains=gains, qbers=qbers, q0=q0, q1=q1,
                                y1=float(y1), e1=float(e1))


def triggering_components(params, mu, eta_channel):
    """
    Model vacuum and single-photon gains per threshold trigger outcome.

    Returns:
        components:  (Q_{1,0}, Q_{1,1}, e_1, Q_{0,0}, Q_{0,1})
                     (Type: TriggerComponents)
    """
    if mu < 0:
        raise ParameterError('mu must be nonnegative, got {}'.format(mu))
    check_fraction('eta_channel', eta_channel)
    p1, y1, e1 = _single_photon_truth(params, mu, eta_channel)
    eta_a = params.eta_alice
    return TriggerComponents(q10=p1 * (1.0 - eta_a) * y1,
                             q11=p1 * eta_a * y1,
                             e1=e1,
                             q00=params.y0 / (1.0 + mu),
                             q01=0.0)


def trigger_multiphoton_mass(mu, eta_a):
    """
    Probability of emitting two or more pairs with the trigger silent or firing.

    Returns:
        silent:  (1 - eta_a)^2 mu^2 / ((1 + eta_a mu)(1 + mu)^2)
                 (Type: float)

        fired:   eta_a (2 - eta_a + mu) mu^2 / ((1 + eta_a mu)(1 + mu)^2)
                 (Type: float)
    """
    denom = (1.0 + eta_a * mu) * (1.0 + mu) ** 2
    silent = (1.0 - eta_a) ** 2 * mu ** 2 / denom
    fired = eta_a * (2.0 - eta_a + mu) * mu ** 2 / denom
    return silent, fired


def entanglement_arms(params, loss_db, geometry='middle'):
    """
    Transmittances of both arms of an entangled source for a total channel loss.

    'middle' puts the source halfway, so each arm sees half of the loss in dB.
    'alice' puts the source next to Alice, so only Bob's arm sees the loss.
    """
    if loss_db < 0:
        raise ParameterError('loss must be nonnegative, got {} dB'.format(loss_db))
    if geometry == 'middle':
        arm = 10.0 ** (-loss_db / 20.0)
        return params.eta_alice * arm, params.eta_bob * arm
    if geometry == 'alice':
        return params.eta_alice, params.eta_bob * 10.0 ** (-loss_db / 10.0)
    err_msg = 'Unknown source geometry "{}", expected one of {}'
    raise ParameterError(err_msg.format(geometry, ', '.join(ARM_GEOMETRIES)))


def ent_error_profile(params, eta_a, eta_b, n_cut=None):
    """
    Coincidence yield and error rate of each n-pair component.

    Y_n = [1 - (1 - Y0A)(1 - eta_a)^n][1 - (1 - Y0B)(1 - eta_b)^n] and
    e_n Y_n = e0 Y_n - 2 (e0 - e_d)/(n + 1) [sum_k (ab)^k - sum_k a^k b^(n-k)]
    with a = 1 - eta_a, b = 1 - eta_b and k = 0..n.
    """
    check_fraction('eta_a', eta_a)
    check_fraction('eta_b', eta_b)
    if n_cut is None:
        n_cut = DEFAULT_N_CUT['pdc-entangled-pair']

    n = np.arange(n_cut + 1)
    click_a = photon_transmittance(eta_a, n_cut)
    click_b = photon_transmittance(eta_b, n_cut)
    y = ((params.y0_alice + (1.0 - params.y0_alice) * click_a)
         * (params.y0 + (1.0 - params.y0) * click_b))

    # sum_k (ab)^k - sum_k a^k b^(n-k), with the k and n-k terms paired
    lost_both = (1.0 - eta_a) * (1.0 - eta_b)
    overlap = np.array([sum(lost_both ** k * click_a[m - 2 * k] * click_b[m - 2 * k]
                            for k in range((m + 1) // 2)) for m in n])
    ey = params.e0 * y - 2.0 * (params.e0 - params.e_detector) / (n + 1.0) * overlap

    with np.errstate(divide='ignore', invalid='ignore'):
        e = np.where(y > 0, ey / y, params.e0)
    e = np.clip(e, 0.0, 1.0)
    y.setflags(write=False)
    e.setflags(write=False)
    return PairProfile(eta_a=float(eta_a), eta_b=float(eta_b), y=y, e=e)


def ent_observables(params, lam, eta_a_total, eta_b_total, mode='closed', n_cut=None):
    """
    Coincidence gain and QBER of an entangled PDC source.

    Args:
        params:       Setup parameters; y0_alice and y0 are the arm backgrounds
                      (Type: ExperimentParams)

        lam:          Half the mean photon number, lambda = mu / 2
                      (Type: float)

        eta_a_total:  Overall transmittance of Alice's arm
                      (Type: float)

        eta_b_total:  Overall transmittance of Bob's arm
                      (Type: float)

    Kwargs:
        mode:   'closed' or 'series'
                (Type: str)

        n_cut:  Truncation of the series
                (Type: int)

    Returns:
        obs:  Coincidence gain and QBER
              (Type: ChannelObservables)
    """
    if lam < 0:
        raise ParameterError('lambda must be nonnegative, got {}'.format(lam))
    check_fraction('eta_a_total', eta_a_total)
    check_fraction('eta_b_total', eta_b_total)

    if mode == 'series':
        dist = photon_distribution('pdc-entangled-pair', lam, n_cut)
        profile = ent_error_profile(params, eta_a_total, eta_b_total, dist.n_cut)
        gain = float(np.dot(dist.probs, profile.y))
        error_gain = float(np.dot(dist.probs, profile.e * profile.y))
    elif mode == 'closed':
        eta_a, eta_b = eta_a_total, eta_b_total
        keep_a = 1.0 - params.y0_alice
        keep_b = 1.0 - params.y0
        span_a = 1.0 + eta_a * lam
        span_b = 1.0 + eta_b * lam
        joint = 1.0 + eta_a * lam + eta_b * lam - eta_a * eta_b * lam
        both = eta_a * eta_b * lam * (1.0 + lam)
        # 1 - keep_a/span_a^2 - keep_b/span_b^2 + keep_a keep_b/joint^2 as a sum of
        # positive terms; span_a span_b - joint = both
        click_a = (eta_a * lam * (2.0 + eta_a * lam) + params.y0_alice) / span_a ** 2
        click_b = (eta_b * lam * (2.0 + eta_b * lam) + params.y0) / span_b ** 2
        spans = span_a * span_b
        gain = (click_a * click_b
                + keep_a * keep_b * both * (spans + joint) / (joint * spans) ** 2)
        error_gain = (params.e0 * gain
                      - 2.0 * (params.e0 - params.e_detector) * both / (spans * joint))
    else:
        raise UnsupportedModeError('Unknown observable mode "{}"'.format(mode))

    qber = error_gain / gain if gain > 0 else params.e0
    return ChannelObservables(gain=gain, qber=qber)
