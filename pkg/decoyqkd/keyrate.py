import logging
from collections import namedtuple

import numpy as np
from scipy.special import entr

from .core_model import ec_inefficiency
from .errors import NoSolutionError, ParameterError

LOGGER = logging.getLogger('decoyqkd')
LOGGER.setLevel(logging.DEBUG)

RATE_STATUSES = ('positive', 'clamped-zero', 'insecure')

TaggedEnsemble = namedtuple('TaggedEnsemble', ['tags', 'overall'])

TimeShiftResult = namedtuple('TimeShiftResult', ['eve_info', 'mismatch_rate'])


class KeyRateResult(namedtuple('KeyRateResult', ['rate', 'terms', 'status'])):
    """
    Secret key rate with the signed terms it was assembled from.

    `terms` is a tuple of (label, value) pairs; `rate` is max(0, sum of terms)
    unless the status is 'insecure', in which case it is zero.
    """
    __slots__ = ()

    @property
    def raw(self):
        """
        Unclamped sum of the terms, useful to optimizers near the zero crossing.
        """
        return float(sum(value for _, value in self.terms))

    def term(self, label):
        for name, value in self.terms:
            if name == label:
                return value
        raise KeyError(label)

    def scaled(self, factor):
        """
        Multiply every term by a positive factor, e.g. q Q to turn a residue into a rate.
        """
        if factor < 0:
            raise ParameterError('scale factor must be nonnegative, got {}'.format(factor))
        terms = tuple((name, value * factor) for name, value in self.terms)
        if self.status == 'insecure':
            return KeyRateResult(0.0, terms, 'insecure')
        return make_rate(terms)


def make_rate(terms, status=None):
    """
    Assemble a KeyRateResult from signed terms, clamping the total at zero.

    Args:
        terms:  (label, value) pairs
                (Type: iterable[tuple[str, float]])

    Kwargs:
        status:  Force a status ('insecure' forces a zero rate)
                 (Type: str or None)

    Returns:
        result:  Clamped rate with its terms
                 (Type: KeyRateResult)
    """
    terms = tuple((str(name), float(value)) for name, value in terms)
    raw = sum(value for _, value in terms)

    if status is None:
        status = 'positive' if raw > 0 else 'clamped-zero'
    elif status not in RATE_STATUSES:
        raise ParameterError('Unknown rate status "{}"'.format(status))

    rate = max(0.0, raw) if status == 'positive' else 0.0
    return KeyRateResult(rate=rate, terms=terms, status=status)


def binary_entropy(x):
    """
    Binary entropy H2(x) in bits, with H2(0) = H2(1) = 0.

    Args:
        x:  Probability, scalar or array
            (Type: float or np.ndarray)

    Returns:
        h:  Entropy in bits
            (Type: float or np.ndarray)
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1) or np.any(np.isnan(arr)):
        err_msg = 'binary entropy argument must lie in [0, 1], got {}'
        raise ParameterError(err_msg.format(x))
    h = (entr(arr) + entr(1.0 - arr)) / np.log(2.0)
    if h.ndim == 0:
        return float(h)
    return h


def clipped_error_entropy(e):
    """
    H2 of an error rate, with rates above 1/2 earning no credit.

    Only for error rates: probabilities such as a survival probability or a
    conditional weight need the symmetric binary_entropy.
    """
    return binary_entropy(np.minimum(np.clip(e, 0.0, 1.0), 0.5))


def lutkenhaus_cost(e):
    """
    Privacy-amplification cost log2(1 + 4e - 4e^2) from collision probability.
    """
    e = np.minimum(np.clip(np.asarray(e, dtype=float), 0.0, 1.0), 0.5)
    cost = np.log2(1.0 + 4.0 * e - 4.0 * e * e)
    if cost.ndim == 0:
        return float(cost)
    return cost


def gllp_rate(params, overall, bounds, vacuum_credit=False):
    """
    GLLP key rate, q{-f(E) Q H2(E) + sum_g Q_g [1 - H2(e_g)]}.

    Args:
        params:   Setup parameters (q and f are taken from here)
                  (Type: ExperimentParams)

        overall:  Signal gain and QBER
                  (Type: ChannelObservables)

        bounds:   Single-photon bounds, or a tagged ensemble of untagged groups
                  (Type: SinglePhotonBounds or TaggedEnsemble)

    Kwargs:
        vacuum_credit:  Add the vacuum gain bound q0_low to the privacy
                        amplification credit
                        (Type: bool)

    Returns:
        result:  Key rate per pulse
                 (Type: KeyRateResult)
    """
    q = params.q_basis
    f = ec_inefficiency(params, overall.qber)
    terms = [('error_correction', -q * f * overall.gain * clipped_error_entropy(overall.qber))]

    if isinstance(bounds, TaggedEnsemble):
        for idx, (gain, phase_error) in enumerate(bounds.tags):
            if gain < 0:
                raise ParameterError('tag gain must be nonnegative, got {}'.format(gain))
            terms.append(('privacy_amplification_{}'.format(idx),
                          q * gain * (1.0 - clipped_error_entropy(phase_error))))
        return make_rate(terms)

    if bounds.status == 'insecure':
        LOGGER.warning('Single-photon bounds from "{}" are insecure, rate set to zero'.format(bounds.method))
        return make_rate(terms, status='insecure')

    terms.append(('privacy_amplification',
                  q * bounds.q1_low * (1.0 - clipped_error_entropy(bounds.e1_high))))
    if vacuum_credit and bounds.q0_low:
        terms.append(('vacuum_credit', q * bounds.q0_low))
    return make_rate(terms)


def shor_preskill_rate(q, gain, delta_b, delta_p, f=1.0):
    """
    R = q Q [1 - f H2(delta_b) - H2(delta_p)].
    """
    for name, value in (('q', q), ('gain', gain), ('delta_b', delta_b), ('delta_p', delta_p)):
        if not 0.0 <= value <= 1.0:
            raise ParameterError('{} must lie in [0, 1], got {}'.format(name, value))
    return make_rate([('sifted', q * gain),
                      ('error_correction', -q * gain * f * clipped_error_entropy(delta_b)),
                      ('privacy_amplification', -q * gain * clipped_error_entropy(delta_p))])


def lutkenhaus_rate(q, overall, q1, e1):
    """
    Key rate with the collision-probability privacy amplification,
    q{-Q H2(E) + Q1 [1 - log2(1 + 4 e1 - 4 e1^2)]}.
    """
    return make_rate([('error_correction', -q * overall.gain * clipped_error_entropy(overall.qber)),
                      ('privacy_amplification', q * q1 * (1.0 - lutkenhaus_cost(e1)))])


def lutkenhaus_scan(errors):
    """
    Tabulate both privacy-amplification costs over a grid of error rates.

    Returns:
        rows:  One dict per error rate with keys error, shannon, collision
               (Type: list[dict[str, float]])
    """
    errors = np.asarray(errors, dtype=float)
    shannon = np.atleast_1d(clipped_error_entropy(errors))
    collision = np.atleast_1d(lutkenhaus_cost(errors))
    return [{'error': float(e), 'shannon': float(h), 'collision': float(c)}
            for e, h, c in zip(np.atleast_1d(errors), shannon, collision)]


def pa_deviation_peak(step=5e-4):
    """
    Locate the largest gap between the two privacy-amplification costs.

    Scans e over (0, 1/2) with the given step and returns the error rate
    maximizing |H2(e) - log2(1 + 4e - 4e^2)|, together with that gap relative
    to H2(e). The absolute gap peaks near e = 3.87%; on the default grid the
    peak falls on 3.85%, where the relative gap is 15.36%.

    Returns:
        peak_error:     Error rate at the peak
                        (Type: float)

        peak_relative:  Gap divided by H2 at the peak
                        (Type: float)
    """
    if not 0 < step < 0.5:
        raise ParameterError('step must lie in (0, 1/2), got {}'.format(step))
    grid = np.arange(step, 0.5, step)
    shannon = clipped_error_entropy(grid)
    gap = np.abs(shannon - lutkenhaus_cost(grid))
    idx = int(np.argmax(gap))
    return float(grid[idx]), float(gap[idx] / shannon[idx])


def koashi_preskill_rate(params, obs, epsilon=0.0):
    """
    Entanglement-based key rate, q Q [1 - f(delta_b) H2(delta_b) - H2(delta_b + epsilon)].

    Args:
        params:   Setup parameters
                  (Type: ExperimentParams)

        obs:      Coincidence gain and QBER of the entangled source
                  (Type: ChannelObservables)

    Kwargs:
        epsilon:  Bias of the phase error over the bit error from finite statistics
                  (Type: float)

    Returns:
        result:  Key rate per pulse
                 (Type: KeyRateResult)
    """
    if epsilon < 0:
        raise ParameterError('epsilon must be nonnegative, got {}'.format(epsilon))
    q = params.q_basis
    delta_b = obs.qber
    delta_p = delta_b + epsilon
    f = ec_inefficiency(params, delta_b)
    terms = [('sifted', q * obs.gain),
             ('error_correction', -q * obs.gain * f * clipped_error_entropy(delta_b)),
             ('privacy_amplification', -q * obs.gain * clipped_error_entropy(delta_p))]
    if delta_p > 0.5:
        return make_rate(terms, status='clamped-zero')
    return make_rate(terms)


def _trigger_rate(q, f, gain, qber, q1, e1):
    return q * (-f * gain * clipped_error_entropy(qber) + q1 * (1.0 - clipped_error_entropy(e1)))


def triggering_rate(params, per_trigger, bounds, mode='threshold'):
    """
    Key rate of a triggered PDC source, R = sum_j max(0, R_j).

    Args:
        params:       Setup parameters
                      (Type: ExperimentParams)

        per_trigger:  Gains and QBERs per trigger outcome
                      (Type: TriggeredObservables)

        bounds:       Single-photon bounds per trigger outcome j
                      (Type: sequence[SinglePhotonBounds])

    Kwargs:
        mode:  'threshold' sums the clamped per-outcome rates; 'pnr' keeps only
               the heralded single-photon events, q Q1 [1 - f H2(e1) - H2(e1)]
               (Type: str)

    Returns:
        result:  Key rate per pulse
                 (Type: KeyRateResult)
    """
    q = params.q_basis

    if mode == 'pnr':
        single = bounds[1]
        if single.status == 'insecure':
            return make_rate([('trigger_1', 0.0)], status='insecure')
        f = ec_inefficiency(params, single.e1_high)
        value = q * single.q1_low * (1.0 - f * clipped_error_entropy(single.e1_high)
                                     - clipped_error_entropy(single.e1_high))
        return make_rate([('trigger_1', value)])

    if mode != 'threshold':
        raise ParameterError('Unknown triggering rate mode "{}"'.format(mode))

    terms = []
    insecure = 0
    for j, bound in enumerate(bounds):
        if bound is None:
            continue
        if bound.status == 'insecure':
            insecure += 1
            terms.append(('trigger_{}'.format(j), 0.0))
            continue
        gain = per_trigger.gains[j]
        qber = per_trigger.qbers[j]
        f = ec_inefficiency(params, qber)
        value = _trigger_rate(q, f, gain, qber, bound.q1_low, bound.e1_high)
        LOGGER.debug('Trigger outcome {} contributes {:.6g}'.format(j, value))
        terms.append(('trigger_{}'.format(j), max(0.0, value)))

    if terms and insecure == len(terms):
        return make_rate(terms, status='insecure')
    return make_rate(terms)


def rate_upper_bound(q1, e1):
    """
    Upper bound Q1 [1 - H2(e1)] from the mutual information of single photons.
    """
    return make_rate([('upper_bound', q1 * (1.0 - clipped_error_entropy(e1)))])


def distance_upper_bound(params):
    """
    Distance beyond which the QBER exceeds 25% and no key can be made.

    Solves eta(l) = 0.25 Y0 / (0.25 - e_d).

    Args:
        params:  Setup parameters
                 (Type: ExperimentParams)

    Returns:
        distance:  Bound in km, inf when background is absent
                   (Type: float)
    """
    if params.e_detector >= 0.25:
        err_msg = 'e_d = {} reaches 25%, the QBER exceeds the bound at every distance'
        raise NoSolutionError(err_msg.format(params.e_detector))
    if params.y0 == 0 or params.beta == 0:
        return float('inf')

    eta_threshold = 0.25 * params.y0 / (0.25 - params.e_detector)
    if eta_threshold >= params.eta_bob:
        return 0.0
    return float(10.0 / params.beta * np.log10(params.eta_bob / eta_threshold))


def timeshift_analysis(eta0, eta1):
    """
    Eve's information and the distillable rate under a time-shift attack.

    Args:
        eta0:  Efficiency of the detector for bit 0 at the shifted time
               (Type: float)

        eta1:  Efficiency of the detector for bit 1 at the shifted time
               (Type: float)

    Returns:
        result:  eve_info = 1 - H2(eta1/(eta0+eta1)) and
                 mismatch_rate = H2(eta0/(eta0+eta1))
                 (Type: TimeShiftResult)
    """
    for name, value in (('eta0', eta0), ('eta1', eta1)):
        if not 0.0 <= value <= 1.0:
            raise ParameterError('{} must lie in [0, 1], got {}'.format(name, value))
    if eta0 + eta1 == 0:
        raise ParameterError('eta0 and eta1 cannot both be zero')

    h = binary_entropy(eta0 / (eta0 + eta1))
    return TimeShiftResult(eve_info=1.0 - h, mismatch_rate=h)


def timeshift_table(ratios):
    """
    Time-shift attack figures for a range of efficiency ratios eta1/eta0.
    """
    rows = []
    for ratio in ratios:
        if ratio < 0:
            raise ParameterError('efficiency ratio must be nonnegative, got {}'.format(ratio))
        if ratio <= 1:
            result = timeshift_analysis(1.0, ratio)
        else:
            result = timeshift_analysis(1.0 / ratio, 1.0)
        rows.append({'ratio': float(ratio),
                     'eve_info': result.eve_info,
                     'mismatch_rate': result.mismatch_rate})
    return rows
