import logging
from collections import namedtuple

import numpy as np
from scipy.optimize import linprog

from .core_model import BACKGROUND_ERROR, photon_distribution
from .errors import InfeasibleConstraintsError, ParameterError
from .keyrate import clipped_error_entropy
from .optimize import golden_section
from .pdc_model import trigger_multiphoton_mass

LOGGER = logging.getLogger('decoyqkd')
LOGGER.setLevel(logging.DEBUG)

DecoyObservations = namedtuple('DecoyObservations', ['entries', 'vacuum_gain'])
DecoyObservations.__new__.__defaults__ = (None,)

SinglePhotonBounds = namedtuple('SinglePhotonBounds', [
    'y1_low', 'e1_high', 'q1_low', 'q0_low', 'method', 'status'])
SinglePhotonBounds.__new__.__defaults__ = (None, 'custom', 'ok')

DeviationMetrics = namedtuple('DeviationMetrics', ['beta_y1', 'beta_e1'])

LP_OPTIONS = {
    'primal_feasibility_tolerance': 1e-10,
    'dual_feasibility_tolerance': 1e-10,
}
## Resolution of the e1 feasibility bisection
E1_XTOL = 1e-10


def _bounds(y1, e1, q1, q0, method):
    """
    Package estimates, assigning zero to a nonpositive single-photon bound.
    """
    if not y1 > 0 or not q1 > 0:
        if y1 > 0:
            LOGGER.debug('{} leaves no single-photon gain, flagged insecure'.format(method))
        else:
            LOGGER.warning('{} bound on Y1 is nonpositive ({:.4g}), flagged insecure'.format(method, y1))
        return SinglePhotonBounds(y1_low=0.0, e1_high=BACKGROUND_ERROR, q1_low=0.0,
                                  q0_low=q0, method=method, status='insecure')
    e1 = float(np.clip(e1, 0.0, 1.0))
    return SinglePhotonBounds(y1_low=float(min(y1, 1.0)), e1_high=e1, q1_low=float(q1),
                              q0_low=q0, method=method, status='ok')


def make_observations(entries, vacuum_gain=None):
    """
    Validate and package decoy observations.

    Args:
        entries:  (intensity or trigger outcome, ChannelObservables) pairs
                  (Type: iterable[tuple[float, ChannelObservables]])

    Kwargs:
        vacuum_gain:  Measured vacuum yield Y0, if a vacuum decoy was sent
                      (Type: float or None)

    Returns:
        obs:  Observations sorted by key
              (Type: DecoyObservations)
    """
    entries = tuple(sorted(((float(k), o) for k, o in entries), key=lambda item: item[0]))
    if not entries:
        raise ParameterError('at least one observation is required')
    keys = [k for k, _ in entries]
    if any(k < 0 for k in keys):
        raise ParameterError('intensities must be nonnegative, got {}'.format(keys))
    if len(set(keys)) != len(keys):
        raise ParameterError('intensities must be distinct, got {}'.format(keys))
    if vacuum_gain is not None and not 0.0 <= vacuum_gain <= 1.0:
        raise ParameterError('vacuum gain must lie in [0, 1], got {}'.format(vacuum_gain))
    return DecoyObservations(entries=entries, vacuum_gain=vacuum_gain)


def model_truth_bounds(dist, profile):
    """
    Single-photon figures straight from the model, the infinite-decoy reference.
    """
    y1 = float(profile.y[1])
    return _bounds(y1, float(profile.e[1]), float(dist.probs[1] * y1),
                   float(dist.probs[0] * profile.y[0]), 'infinite')


def nondecoy_bounds(obs_signal, mu, kind='coherent'):
    """
    Bounds without decoys: every multi-photon emission is assumed detected
    and error free.

    Q1 >= Q - sum_{i>=2} P(i), e1 <= E Q / Q1.
    """
    if mu <= 0:
        raise ParameterError('mu must be positive, got {}'.format(mu))
    dist = photon_distribution(kind, mu)
    multi = 1.0 - dist.probs[0] - dist.probs[1]
    q1 = obs_signal.gain - multi
    if q1 <= 0:
        return _bounds(0.0, BACKGROUND_ERROR, 0.0, 0.0, 'nondecoy')
    e1 = obs_signal.qber * obs_signal.gain / q1
    return _bounds(q1 / dist.probs[1], e1, q1, 0.0, 'nondecoy')


def vacuum_weak_bounds(obs_mu, obs_nu, y0_measured, mu, nu, method='vacuum_weak'):
    """
    Single-photon bounds from a weak decoy nu and a vacuum decoy.

    Args:
        obs_mu:       Signal gain and QBER
                      (Type: ChannelObservables)

        obs_nu:       Weak decoy gain and QBER
                      (Type: ChannelObservables)

        y0_measured:  Vacuum yield Y0
                      (Type: float)

        mu:           Signal intensity
                      (Type: float)

        nu:           Weak decoy intensity, 0 < nu < mu
                      (Type: float)

    Returns:
        bounds:  Y1 lower and e1 upper bounds
                 (Type: SinglePhotonBounds)
    """
    if not 0 < nu < mu:
        err_msg = 'decoy intensities must satisfy 0 < nu < mu, got mu={}, nu={}'
        raise ParameterError(err_msg.format(mu, nu))
    if y0_measured < 0:
        raise ParameterError('vacuum yield must be nonnegative, got {}'.format(y0_measured))

    y1 = mu / (mu * nu - nu ** 2) * (obs_nu.gain * np.exp(nu)
                                     - obs_mu.gain * np.exp(mu) * nu ** 2 / mu ** 2
                                     - (mu ** 2 - nu ** 2) / mu ** 2 * y0_measured)
    q0 = y0_measured * np.exp(-mu)
    if y1 <= 0:
        return _bounds(y1, BACKGROUND_ERROR, 0.0, q0, method)

    e1 = ((obs_nu.qber * obs_nu.gain * np.exp(nu) - BACKGROUND_ERROR * y0_measured)
          / (y1 * nu))
    return _bounds(y1, e1, y1 * mu * np.exp(-mu), q0, method)


def one_decoy_bounds(obs_mu, obs_nu, mu, nu):
    """
    Weak decoy only; the vacuum+weak formulas with Y0 = 0.
    """
    return vacuum_weak_bounds(obs_mu, obs_nu, 0.0, mu, nu, method='one_decoy')


def _solve(cost, a_ub, b_ub, bounds):
    return linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds,
                   method='highs', options=LP_OPTIONS)


class _TruncatedLP(object):
    """
    Linear constraints on (Y_0..Y_n, Z_0..Z_n) with Z_i = e_i Y_i, built from
    decoy rows Q - tail <= sum_i w_i Y_i <= Q and the same for E Q.
    """

    def __init__(self, rows, n_cut, vacuum_gain=None):
        ## Number of photon-number components kept
        ## (Type: int)
        self.size = n_cut + 1
        a_ub = []
        b_ub = []
        zeros = np.zeros(self.size)
        for weights, tail, obs in rows:
            scale = obs.gain if obs.gain > 0 else 1.0
            w = weights / scale
            error_gain = obs.qber * obs.gain
            a_ub.extend([np.concatenate([w, zeros]), np.concatenate([-w, zeros]),
                         np.concatenate([zeros, w]), np.concatenate([zeros, -w])])
            b_ub.extend([obs.gain / scale, -(obs.gain - tail) / scale,
                         error_gain / scale, -(error_gain - tail) / scale])

        # Z_i <= Y_i
        eye = np.eye(self.size)
        a_ub.extend(np.hstack([-eye, eye]))
        b_ub.extend(np.zeros(self.size))

        ## Inequality matrix and right-hand side
        self.a_ub = np.array(a_ub)
        self.b_ub = np.array(b_ub)

        self.bounds = [(0.0, 1.0)] * (2 * self.size)
        if vacuum_gain is not None:
            self.bounds[0] = (vacuum_gain, vacuum_gain)
            self.bounds[self.size] = (BACKGROUND_ERROR * vacuum_gain,
                                      BACKGROUND_ERROR * vacuum_gain)

    def min_y1(self, error=None):
        """
        Smallest feasible Y1, optionally subject to e1 >= error.

        Returns None when the constraints are infeasible.
        """
        cost = np.zeros(2 * self.size)
        cost[1] = 1.0
        a_ub, b_ub = self.a_ub, self.b_ub
        if error is not None:
            row = np.zeros(2 * self.size)
            row[1] = error
            row[self.size + 1] = -1.0
            a_ub = np.vstack([a_ub, row])
            b_ub = np.append(b_ub, 0.0)
        res = _solve(cost, a_ub, b_ub, self.bounds)
        if res.status == 2:
            return None
        if res.status != 0:
            err_msg = 'LP solver failed with status {}: {}'
            raise InfeasibleConstraintsError(err_msg.format(res.status, res.message),
                                             solver_message=res.message)
        return float(res.x[1])


def _lp_rows(obs, source, response, n_cut):
    rows = []
    for key, channel in obs.entries:
        if response is None:
            dist = photon_distribution(source.kind, key, n_cut)
            rows.append((np.array(dist.probs), dist.tail, channel))
        else:
            j = int(key)
            if not 0 <= j < response.matrix.shape[0]:
                raise ParameterError('trigger outcome {} outside the response matrix'.format(j))
            weights = source.probs[:n_cut + 1] * response.matrix[j, :n_cut + 1]
            rows.append((weights, source.tail, channel))
    return rows


def lp_bounds(obs, source, response=None, n_cut=None):
    """
    Numerical decoy method: worst-case single-photon figures consistent with
    the observations once the photon-number series is truncated.

    Y1 is first minimized. The largest feasible e1 is then found by bisection
    on the feasibility of Z1 >= e Y1, and a golden-section search over e picks
    the pair (Y1_min(e), e) with the smallest privacy amplification credit
    Y1 [1 - H2(e)].

    Args:
        obs:     One entry per intensity (active decoys) or per trigger
                 outcome (passive decoys when response is given)
                 (Type: DecoyObservations)

        source:  Signal distribution; its kind sets the decoy rows and its
                 P(1) the single-photon gain
                 (Type: PhotonNumberDist)

    Kwargs:
        response:  Trigger response for the passive variant
                   (Type: TriggerResponse or None)

        n_cut:     Truncation index, defaults to the source's
                   (Type: int)

    Returns:
        bounds:  Worst-case single-photon bounds
                 (Type: SinglePhotonBounds)
    """
    if n_cut is None:
        n_cut = source.n_cut
    if n_cut < 2:
        raise ParameterError('n_cut must be at least 2, got {}'.format(n_cut))
    if response is not None and response.matrix.shape[1] < n_cut + 1:
        raise ParameterError('trigger response covers fewer than {} photon numbers'.format(n_cut + 1))
    if response is not None and source.n_cut < n_cut:
        raise ParameterError('source truncated below n_cut={}'.format(n_cut))
    if not obs.entries:
        raise ParameterError('at least one observation is required')

    vacuum_gain = obs.vacuum_gain
    if vacuum_gain is None and response is None:
        for key, channel in obs.entries:
            if key == 0:
                vacuum_gain = channel.gain

    problem = _TruncatedLP(_lp_rows(obs, source, response, n_cut), n_cut, vacuum_gain)
    y1_min = problem.min_y1()
    if y1_min is None:
        raise InfeasibleConstraintsError('decoy observations admit no yields within the truncation')
    LOGGER.debug('LP minimum Y1 = {:.6g}'.format(y1_min))

    if y1_min <= 0:
        return _bounds(0.0, BACKGROUND_ERROR, 0.0, 0.0, 'lp')

    lo, hi = 0.0, 1.0
    if problem.min_y1(error=hi) is not None:
        lo = hi
    while hi - lo > E1_XTOL:
        mid = 0.5 * (lo + hi)
        if problem.min_y1(error=mid) is None:
            hi = mid
        else:
            lo = mid
    e1_max = lo
    LOGGER.debug('LP largest feasible e1 = {:.6g}'.format(e1_max))

    def credit(error):
        y1 = problem.min_y1(error=error)
        if y1 is None:
            return np.inf
        return y1 * (1.0 - clipped_error_entropy(error))

    e_star, neg_credit = golden_section(lambda e: -credit(e), 0.0, min(e1_max, 0.5))
    if credit(e1_max) <= -neg_credit:
        e_star = e1_max
    y1 = problem.min_y1(error=e_star)
    if y1 is None:
        e_star = e1_max
        y1 = problem.min_y1(error=e_star)

    q0 = None
    if vacuum_gain is not None:
        q0 = float(source.probs[0] * vacuum_gain)
    return _bounds(y1, e_star, source.probs[1] * y1, q0, 'lp')


def trig_weak_bounds(obs_mu_j1, obs_nu_j1, mu, nu, eta_a):
    """
    Active weak decoy on a triggered source, from triggered detections only.

    Y1 >= [mu/nu (1+nu)^3 Q_{nu,1} - nu/mu (1+mu)^3 Q_{mu,1}] / (eta_a (mu - nu))
    e1 <= min_x (1+x)^2/x E_{x,1} Q_{x,1} / (eta_a Y1) over x in {mu, nu}
    """
    if not 0 < nu < mu:
        err_msg = 'decoy intensities must satisfy 0 < nu < mu, got mu={}, nu={}'
        raise ParameterError(err_msg.format(mu, nu))
    if not 0 < eta_a <= 1:
        raise ParameterError('eta_a must lie in (0, 1], got {}'.format(eta_a))

    y1 = ((mu / nu * (1.0 + nu) ** 3 * obs_nu_j1.gain
           - nu / mu * (1.0 + mu) ** 3 * obs_mu_j1.gain) / (eta_a * (mu - nu)))
    if y1 <= 0:
        return _bounds(y1, BACKGROUND_ERROR, 0.0, 0.0, 'trig_weak')

    e1 = min((1.0 + x) ** 2 / x * o.qber * o.gain / (eta_a * y1)
             for x, o in ((mu, obs_mu_j1), (nu, obs_nu_j1)))
    return _bounds(y1, e1, mu / (1.0 + mu) ** 2 * eta_a * y1, 0.0, 'trig_weak')


def _ayki_y1(q_0, q_1, q00, mu, eta_a):
    return ((1.0 + mu) ** 2 / mu
            * ((2.0 - eta_a) / (1.0 - eta_a) * (q_0 - q00) - (1.0 - eta_a) / eta_a * q_1))


def _ayki_channel(q_total, q00, mu):
    # invert 1 - Q_mu = (1 - Y0) / (1 + mu eta) with Y0 = (1 + mu) Q_{0,0}
    y0 = min((1.0 + mu) * q00, 1.0)
    if q_total >= 1.0:
        return y0, 1.0
    eta = ((1.0 - y0) / (1.0 - q_total) - 1.0) / mu
    return y0, float(np.clip(eta, 0.0, 1.0))


def _ayki_limit_y1(q_0, q_1, q00, mu, eta_a):
    """
    Limit of the AYKI bound when the trigger efficiency reaches 0 or 1.

    At eta_a = 1 the bound becomes tight, Y1 = Y0 + eta - Y0 eta. At eta_a = 0
    the term (1 - eta_a)/eta_a Q_{mu,1} tends to sum_n n P(n) Y_n and
        Y1 >= (1+mu)^2/mu [2 (Q_{mu,0} - Q_{0,0}) - mu + (1 - Y0) mu (1 - eta)/(1 + mu eta)^2].
    Neither outcome resolves these limits on its own, so eta is recovered from
    the total gain through the channel model.
    """
    y0, eta = _ayki_channel(q_0 + q_1, q00, mu)
    if eta_a >= 1.0:
        return y0 + eta - y0 * eta
    first_moment = mu - (1.0 - y0) * mu * (1.0 - eta) / (1.0 + mu * eta) ** 2
    return (1.0 + mu) ** 2 / mu * (2.0 * (q_0 - q00) - first_moment)


def ayki_bounds(obs_j0, obs_j1, mu, eta_a, f_ec=1.22):
    """
    Passive decoy bounds from the non-triggered and triggered detections of a
    single intensity.

    Y1 >= (1+mu)^2/mu [(2-eta_a)/(1-eta_a)(Q_{mu,0} - Q_{0,0}) - (1-eta_a)/eta_a Q_{mu,1}]
    where the unknown vacuum gain Q_{0,0} in [0, E_{mu,0} Q_{mu,0} / e0] is chosen
    to minimize the resulting key rate, and e1 <= E_{mu,1} Q_{mu,1} / Q_{1,1}.
    At eta_a = 1 every non-triggered detection comes from the vacuum, so
    Q_{0,0} = Q_{mu,0}; at eta_a = 0 nothing triggers and e1 is bounded from the
    non-triggered detections. Both endpoints use the limit of the bound.

    Args:
        obs_j0:  Non-triggered gain and QBER
                 (Type: ChannelObservables)

        obs_j1:  Triggered gain and QBER
                 (Type: ChannelObservables)

        mu:      Mean pair number
                 (Type: float)

        eta_a:   Trigger efficiency in [0, 1]
                 (Type: float)

    Kwargs:
        f_ec:  Error-correction inefficiency used by the rate-driven search
               (Type: float)

    Returns:
        bounds:  Y1 lower and e1 upper bounds, q1_low for the triggered outcome
                 (Type: SinglePhotonBounds)
    """
    if mu <= 0:
        raise ParameterError('mu must be positive, got {}'.format(mu))
    if not 0 <= eta_a <= 1:
        raise ParameterError('eta_a must lie in [0, 1], got {}'.format(eta_a))

    p1 = mu / (1.0 + mu) ** 2
    endpoint = eta_a in (0.0, 1.0)
    # the outcome whose single photons carry the key: triggered unless nothing triggers
    keyed, share = (obs_j0, 1.0) if eta_a == 0 else (obs_j1, eta_a)
    q00_high = min(obs_j0.qber * obs_j0.gain / BACKGROUND_ERROR, obs_j0.gain)
    fixed_cost = -f_ec * sum(o.gain * clipped_error_entropy(o.qber) for o in (obs_j0, obs_j1))

    def estimate(q00):
        if endpoint:
            y1 = _ayki_limit_y1(obs_j0.gain, obs_j1.gain, q00, mu, eta_a)
        else:
            y1 = _ayki_y1(obs_j0.gain, obs_j1.gain, q00, mu, eta_a)
        if y1 <= 0:
            return y1, BACKGROUND_ERROR
        return y1, keyed.qber * keyed.gain / (p1 * share * y1)

    def rate(q00):
        y1, e1 = estimate(q00)
        if y1 <= 0:
            return fixed_cost
        return fixed_cost + p1 * max(y1, 0.0) * (1.0 - clipped_error_entropy(min(e1, 1.0)))

    if eta_a == 1:
        q00 = obs_j0.gain
    else:
        q00, worst = golden_section(lambda x: -rate(x), 0.0, q00_high)
        for edge in (0.0, q00_high):
            if rate(edge) < -worst:
                q00, worst = edge, -rate(edge)
    LOGGER.debug('AYKI worst-case vacuum gain Q00 = {:.6g}'.format(q00))

    y1, e1 = estimate(q00)
    return _bounds(y1, e1, p1 * share * y1, q00, 'ayki')


def trig_nondecoy_bounds(per_trigger, mu, eta_a):
    """
    Per-trigger bounds without decoys, charging each outcome with its
    multi-photon mass.

    Returns:
        bounds:  Bounds for trigger outcomes 0 and 1
                 (Type: list[SinglePhotonBounds])
    """
    if mu <= 0:
        raise ParameterError('mu must be positive, got {}'.format(mu))
    p1 = mu / (1.0 + mu) ** 2
    masses = trigger_multiphoton_mass(mu, eta_a)
    shares = (1.0 - eta_a, eta_a)
    result = []
    for j in (0, 1):
        q1 = per_trigger.gains[j] - masses[j]
        if q1 <= 0 or shares[j] == 0:
            result.append(_bounds(0.0, BACKGROUND_ERROR, 0.0, 0.0, 'trig_nondecoy'))
            continue
        e1 = per_trigger.qbers[j] * per_trigger.gains[j] / q1
        result.append(_bounds(q1 / (p1 * shares[j]), e1, q1, 0.0, 'trig_nondecoy'))
    return result


def trig_infinite_bounds(per_trigger):
    """
    Per-trigger model truth, the infinite-decoy reference of a triggered source.

    For a number-resolving trigger only outcome 1 is returned; the others are None.
    """
    n_outcomes = len(per_trigger.gains)
    result = []
    for j in range(n_outcomes):
        q1 = float(per_trigger.q1[j])
        if per_trigger.response_kind != 'threshold' and j != 1:
            result.append(None)
            continue
        result.append(_bounds(per_trigger.y1, per_trigger.e1, q1,
                              float(per_trigger.q0[j]), 'infinite'))
    return result


def per_trigger_bounds(bounds, mu, response):
    """
    Split single-photon bounds into per-trigger gains Q_{1,j} = P(1) eta_{j|1} Y1.
    """
    p1 = mu / (1.0 + mu) ** 2
    result = []
    for j in range(response.matrix.shape[0]):
        share = response.matrix[j, 1]
        if bounds.status == 'insecure' or share == 0:
            result.append(bounds._replace(q1_low=0.0, status='insecure'))
            continue
        result.append(bounds._replace(q1_low=p1 * share * bounds.y1_low))
    return result


def deviation_metrics(bounds, truth):
    """
    Relative deviations beta_Y1 = (Y1 - Y1L)/Y1 and beta_e1 = (e1U - e1)/e1.

    A zero true value leaves the corresponding deviation undefined (NaN).
    """
    beta_y1 = np.nan
    beta_e1 = np.nan
    if truth.y1_low > 0:
        beta_y1 = (truth.y1_low - bounds.y1_low) / truth.y1_low
    else:
        LOGGER.warning('True Y1 is zero, beta_Y1 undefined')
    if truth.e1_high > 0:
        beta_e1 = (bounds.e1_high - truth.e1_high) / truth.e1_high
    else:
        LOGGER.warning('True e1 is zero, beta_e1 undefined')
    return DeviationMetrics(beta_y1=float(beta_y1), beta_e1=float(beta_e1))
