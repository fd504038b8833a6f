import logging
from collections import namedtuple

import numpy as np
from scipy import stats

from .errors import ParameterError, UnsupportedModeError

LOGGER = logging.getLogger('decoyqkd')
LOGGER.setLevel(logging.DEBUG)

SOURCE_KINDS = ('coherent', 'pdc-pair', 'pdc-entangled-pair')
DEFAULT_N_CUT = {
    'coherent': 20,
    'pdc-pair': 60,
    'pdc-entangled-pair': 60,
}
BACKGROUND_ERROR = 0.5

ExperimentParams = namedtuple('ExperimentParams', [
    'name', 'wavelength', 'beta', 'eta_bob', 'eta_alice', 'e_detector',
    'y0', 'y0_alice', 'e0', 'q_basis', 'f_ec', 'rep_rate'])

PhotonNumberDist = namedtuple('PhotonNumberDist',
                              ['kind', 'intensity', 'probs', 'n_cut', 'tail'])

YieldProfile = namedtuple('YieldProfile', ['eta_total', 'y', 'e'])

Counts = namedtuple('Counts', ['pulses', 'detections', 'errors'])

ChannelObservables = namedtuple('ChannelObservables', ['gain', 'qber', 'counts'])
ChannelObservables.__new__.__defaults__ = (None,)


def check_fraction(name, value):
    if not 0.0 <= value <= 1.0:
        err_msg = '{} must be a fraction in [0, 1], got {}'
        raise ParameterError(err_msg.format(name, value))


def make_params(name='custom', wavelength=1550.0, beta=0.21, eta_bob=0.045,
                eta_alice=1.0, e_detector=0.033, y0=1.7e-6, y0_alice=0.0,
                e0=BACKGROUND_ERROR, q_basis=0.5, f_ec=1.22, rep_rate=2e6):
    """
    Build a validated ExperimentParams record.

    Keyword Args:
        name:        Label of the setup
                     (Type: str)
        wavelength:  Wavelength in nm
                     (Type: float)
        beta:        Fiber loss coefficient in dB/km
                     (Type: float)
        eta_bob:     Transmittance of Bob's detection side, detector included
                     (Type: float)
        eta_alice:   Efficiency of Alice's trigger detector (1 for coherent setups)
                     (Type: float)
        e_detector:  Intrinsic misalignment error e_d
                     (Type: float)
        y0:          Background count probability on Bob's side
                     (Type: float)
        y0_alice:    Background count probability on Alice's side
                     (Type: float)
        e0:          Error rate of background counts, always 1/2
                     (Type: float)
        q_basis:     Basis reconciliation factor
                     (Type: float)
        f_ec:        Error-correction inefficiency, a constant or a sequence
                     of (error rate, inefficiency) breakpoints
                     (Type: float or tuple[tuple[float, float]])
        rep_rate:    Pulse repetition rate in Hz
                     (Type: float)

    Returns:
        params:  Validated parameters
                 (Type: ExperimentParams)
    """
    for field, value in (('eta_bob', eta_bob), ('eta_alice', eta_alice),
                         ('e_detector', e_detector), ('y0', y0),
                         ('y0_alice', y0_alice), ('q_basis', q_basis)):
        check_fraction(field, value)

    if e0 != BACKGROUND_ERROR:
        raise ParameterError('e0 is fixed at 1/2, got {}'.format(e0))
    if beta < 0:
        raise ParameterError('beta must be nonnegative, got {}'.format(beta))
    if rep_rate <= 0:
        raise ParameterError('rep_rate must be positive, got {}'.format(rep_rate))

    if np.ndim(f_ec) == 0:
        f_ec = float(f_ec)
        if f_ec < 1.0:
            raise ParameterError('f_ec must be at least 1, got {}'.format(f_ec))
    else:
        f_ec = tuple((float(e), float(f)) for e, f in f_ec)
        if not f_ec:
            raise ParameterError('f_ec table is empty')
        errors = [e for e, _ in f_ec]
        if any(b <= a for a, b in zip(errors, errors[1:])):
            raise ParameterError('f_ec table error rates must be increasing')
        if any(f < 1.0 for _, f in f_ec):
            raise ParameterError('f_ec table values must be at least 1')

    return ExperimentParams(name=name, wavelength=float(wavelength),
                            beta=float(beta), eta_bob=float(eta_bob),
                            eta_alice=float(eta_alice),
                            e_detector=float(e_detector), y0=float(y0),
                            y0_alice=float(y0_alice), e0=float(e0),
                            q_basis=float(q_basis), f_ec=f_ec,
                            rep_rate=float(rep_rate))


def update_params(params, **changes):
    """
    Return a copy of params with the given fields replaced, revalidated.
    """
    fields = params._asdict()
    unknown = set(changes) - set(fields)
    if unknown:
        raise ParameterError('Unknown parameter(s): {}'.format(', '.join(sorted(unknown))))
    fields.update(changes)
    return make_params(**fields)


def ec_inefficiency(params, error_rate):
    """
    Error-correction inefficiency f(e) for the given error rate.
    """
    if isinstance(params.f_ec, float):
        return params.f_ec
    table = np.array(params.f_ec)
    return float(np.interp(error_rate, table[:, 0], table[:, 1]))


def transmittance(params, distance):
    """
    Overall transmittance of Bob's side after the given fiber length.

    Args:
        params:    Setup parameters
                   (Type: ExperimentParams)
        distance:  Fiber length in km
                   (Type: float)

    Returns:
        eta:  eta_bob * 10^(-beta * distance / 10)
              (Type: float)
    """
    if distance < 0:
        raise ParameterError('distance must be nonnegative, got {}'.format(distance))
    return params.eta_bob * 10.0 ** (-params.beta * distance / 10.0)


def loss_transmittance(params, loss_db):
    """
    Overall transmittance of Bob's side after a channel loss given in dB.
    """
    if loss_db < 0:
        raise ParameterError('loss must be nonnegative, got {} dB'.format(loss_db))
    return params.eta_bob * 10.0 ** (-loss_db / 10.0)


def _frozen(values):
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


def _frozen_distribution(kind, intensity):
    if kind == 'coherent':
        return stats.poisson(intensity)
    if kind == 'pdc-pair':
        # mu^n / (1 + mu)^(n+1), a geometric law starting at zero
        return stats.geom(1.0 / (1.0 + intensity), loc=-1)
    if kind == 'pdc-entangled-pair':
        # (n + 1) lambda^n / (1 + lambda)^(n+2)
        return stats.nbinom(2, 1.0 / (1.0 + intensity))
    err_msg = 'Unknown source kind "{}", expected one of {}'
    raise ParameterError(err_msg.format(kind, ', '.join(SOURCE_KINDS)))


def photon_distribution(kind, intensity, n_cut=None):
    """
    Truncated photon (pair) number distribution of a source.

    Args:
        kind:       One of 'coherent', 'pdc-pair', 'pdc-entangled-pair'
                    (Type: str)
        intensity:  Mean photon number mu, or lambda for entangled pairs
                    (Type: float)

    Keyword Args:
        n_cut:  Largest photon number kept. Defaults to a kind-dependent
                value that leaves less than 1e-12 tail mass for intensity <= 1.
                (Type: int)

    Returns:
        dist:  Distribution with probs[0..n_cut] and the dropped tail mass
               (Type: PhotonNumberDist)
    """
    if kind not in SOURCE_KINDS:
        err_msg = 'Unknown source kind "{}", expected one of {}'
        raise ParameterError(err_msg.format(kind, ', '.join(SOURCE_KINDS)))
    if intensity < 0:
        raise ParameterError('intensity must be nonnegative, got {}'.format(intensity))
    if n_cut is None:
        n_cut = DEFAULT_N_CUT[kind]
    if n_cut < 1:
        raise ParameterError('n_cut must be at least 1, got {}'.format(n_cut))

    n = np.arange(n_cut + 1)
    if intensity == 0:
        probs = (n == 0).astype(float)
        tail = 0.0
    else:
        rv = _frozen_distribution(kind, intensity)
        probs = rv.pmf(n)
        tail = float(rv.sf(n_cut))

    return PhotonNumberDist(kind=kind, intensity=float(intensity),
                            probs=_frozen(probs), n_cut=int(n_cut), tail=tail)


def photon_transmittance(eta, n_cut):
    """
    Probability that at least one of i photons survives, for i = 0..n_cut.
    """
    i = np.arange(n_cut + 1)
    if eta >= 1.0:
        return (i > 0).astype(float)
    return -np.expm1(i * np.log1p(-eta))


def yield_error_profile(params, eta_total, n_cut=None, exclusive_background=False):
    """
    Yields and error rates of every photon-number component.

    Y_i = Y0 + eta_i - Y0 eta_i with eta_i = 1 - (1 - eta)^i. The error rate is
    e_i = (e0 Y0 + e_d eta_i) / Y_i. With exclusive_background a coincident
    background click counts as a random bit, e_i Y_i = e0 Y0 + e_d eta_i (1 - Y0),
    which is the form used for heralded sources.

    Args:
        params:     Setup parameters
                    (Type: ExperimentParams)
        eta_total:  Overall transmittance of the channel and Bob's detection
                    (Type: float)

    Keyword Args:
        n_cut:                 Largest photon number (default 20)
                               (Type: int)
        exclusive_background:  Use the coincident-background error form
                               (Type: bool)

    Returns:
        profile:  Per-photon-number yields and error rates
                  (Type: YieldProfile)
    """
    check_fraction('eta_total', eta_total)
    if n_cut is None:
        n_cut = DEFAULT_N_CUT['coherent']

    eta_i = photon_transmittance(eta_total, n_cut)
    y0 = params.y0
    y = y0 + eta_i - y0 * eta_i

    if exclusive_background:
        ey = params.e0 * y0 + params.e_detector * eta_i * (1.0 - y0)
    else:
        ey = params.e0 * y0 + params.e_detector * eta_i

    with np.errstate(divide='ignore', invalid='ignore'):
        e = np.where(y > 0, ey / y, params.e0)
    e[0] = params.e0

    return YieldProfile(eta_total=float(eta_total), y=_frozen(y), e=_frozen(e))


def component_gains(dist, profile):
    """
    Gain of each photon-number component, Q_i = P(i) Y_i.
    """
    return dist.probs * profile.y[:dist.n_cut + 1]


def multi_photon_error(dist, profile):
    """
    Gain-weighted error rate of the components with two or more photons.
    """
    q = component_gains(dist, profile)[2:]
    if q.sum() <= 0:
        return profile.e[-1]
    return float(np.dot(q, profile.e[2:dist.n_cut + 1]) / q.sum())


def channel_observables(params, dist, profile, mode='series'):
    """
    Overall gain and QBER of a source observed through the channel.

    Args:
        params:   Setup parameters
                  (Type: ExperimentParams)
        dist:     Source distribution
                  (Type: PhotonNumberDist)
        profile:  Yields and error rates
                  (Type: YieldProfile)

    Keyword Args:
        mode:  'series' sums the photon-number components, 'closed' uses the
               closed form available for coherent sources
               (Type: str)

    Returns:
        obs:  Gain and QBER
              (Type: ChannelObservables)
    """
    if mode == 'series':
        n = min(dist.n_cut, len(profile.y) - 1)
        gain = float(np.dot(dist.probs[:n + 1], profile.y[:n + 1]))
        error_gain = float(np.dot(dist.probs[:n + 1],
                                  profile.e[:n + 1] * profile.y[:n + 1]))
    elif mode == 'closed':
        if dist.kind != 'coherent':
            err_msg = 'Closed-form observables are only available for coherent sources, not "{}"'
            raise UnsupportedModeError(err_msg.format(dist.kind))
        detect = -np.expm1(-profile.eta_total * dist.intensity)
        gain = params.y0 + (1.0 - params.y0) * detect
        error_gain = params.e0 * params.y0 + params.e_detector * detect
    else:
        raise UnsupportedModeError('Unknown observable mode "{}"'.format(mode))

    qber = error_gain / gain if gain > 0 else params.e0
    return ChannelObservables(gain=gain, qber=qber)


def with_counts(obs, n_pulses):
    """
    Attach the expected event counts for n_pulses pulses to an observation.
    """
    if n_pulses < 1:
        raise ParameterError('n_pulses must be at least 1, got {}'.format(n_pulses))
    detections = int(round(obs.gain * n_pulses))
    errors = int(round(obs.qber * obs.gain * n_pulses))
    return obs._replace(counts=Counts(pulses=int(n_pulses), detections=detections,
                                      errors=min(errors, detections)))


def coherent_observables(params, mu, eta_total, mode='closed', n_cut=None):
    """
    Shortcut for the usual coherent-source observation chain.
    """
    dist = photon_distribution('coherent', mu, n_cut)
    profile = yield_error_profile(params, eta_total, dist.n_cut)
    return channel_observables(params, dist, profile, mode=mode)
