"""
Finite-data analysis of decoy-state key rates.

Fluctuations are treated with a plain standard-error analysis: every observed
decoy gain (and error gain) is replaced by the end of its u-sigma interval
that is worst for the estimate. The signal gain and QBER are measured
directly from the whole signal population and are not fluctuated.
"""
import logging
from collections import namedtuple

import numpy as np

from .core_model import (ChannelObservables, coherent_observables, ec_inefficiency,
                         photon_distribution, transmittance, update_params,
                         with_counts, yield_error_profile)
from .errors import ParameterError
from .estimators import (ayki_bounds, model_truth_bounds, per_trigger_bounds,
                         trig_infinite_bounds, trig_weak_bounds, vacuum_weak_bounds)
from .keyrate import gllp_rate, koashi_preskill_rate, make_rate, triggering_rate
from .optimize import golden_section, optimal_mu_coherent
from .pdc_model import ent_observables, trigger_response, triggering_observables
from .twoway import decoy_b_pipeline

LOGGER = logging.getLogger('decoyqkd')
LOGGER.setLevel(logging.DEBUG)

TRIGGER_ESTIMATORS = ('infinite', 'weak', 'ayki')

## Smallest data size accepted by the allocation search
MIN_ALLOCATION_PULSES = 10 ** 6

PulseBudget = namedtuple('PulseBudget', ['n_total', 'n_signal', 'n_vacuum', 'n_weak'])

ConfidenceSpec = namedtuple('ConfidenceSpec', ['u', 'log_failure'])
ConfidenceSpec.__new__.__defaults__ = (10.0, 0.0)

ObservableInterval = namedtuple('ObservableInterval', [
    'gain_low', 'gain_high', 'error_gain_low', 'error_gain_high', 'flagged'])

AllocationResult = namedtuple('AllocationResult', ['budget', 'nu', 'result', 'vacuum_free'])

FlucSimReport = namedtuple('FlucSimReport', [
    'budget', 'mu', 'nu', 'eta', 'y0_high', 'y1_low', 'e1_high',
    'beta_y0', 'beta_y1', 'beta_e1', 'beta_r', 'rate', 'final_key'])


def make_budget(n_total, n_signal, n_vacuum, n_weak=None):
    """
    Validated pulse budget. With n_weak omitted the weak decoy takes the rest.
    """
    n_total = int(n_total)
    n_signal = int(n_signal)
    n_vacuum = int(n_vacuum)
    n_weak = n_total - n_signal - n_vacuum if n_weak is None else int(n_weak)
    if min(n_total, n_signal, n_vacuum, n_weak) < 0:
        err_msg = 'pulse counts must be nonnegative, got N={}, Ns={}, Nvac={}, Nw={}'
        raise ParameterError(err_msg.format(n_total, n_signal, n_vacuum, n_weak))
    if n_signal + n_vacuum + n_weak != n_total:
        err_msg = 'pulse counts {} + {} + {} do not add up to {}'
        raise ParameterError(err_msg.format(n_signal, n_vacuum, n_weak, n_total))
    return PulseBudget(n_total=n_total, n_signal=n_signal, n_vacuum=n_vacuum, n_weak=n_weak)


def make_confidence(u=10.0, log_failure=0.0):
    if not u >= 0:
        raise ParameterError('u must be nonnegative, got {}'.format(u))
    if log_failure > 0:
        raise ParameterError('log_failure must be nonpositive, got {}'.format(log_failure))
    return ConfidenceSpec(u=float(u), log_failure=float(log_failure))


def _interval(x, n, u):
    sigma = np.sqrt(max(x * (1.0 - x), 0.0) / n)
    return max(0.0, x - u * sigma), min(1.0, x + u * sigma)


def observable_interval(obs, conf):
    """
    Standard-error intervals on the gain and the error gain of an observation.

    sigma = sqrt(x (1 - x) / N) for x in {Q, E Q}; the interval is x +- u sigma
    clamped to [0, 1]. The tested values Q and E Q are the centers.

    Args:
        obs:   Observation with its event counts attached
               (Type: ChannelObservables)

        conf:  Number of standard deviations u
               (Type: ConfidenceSpec)

    Returns:
        interval:  Gain and error-gain intervals. With zero detections the
                   interval is [0, 1/N + u sigma(1/N)] and flagged.
                   (Type: ObservableInterval)
    """
    if obs.counts is None:
        raise ParameterError('observable_interval needs event counts, use with_counts first')
    n = obs.counts.pulses
    u = conf.u

    if obs.counts.detections == 0:
        _, high = _interval(1.0 / n, n, u)
        high = max(high, min(1.0, 1.0 / n))
        LOGGER.warning('No detections in {} pulses, interval only bounded above'.format(n))
        return ObservableInterval(gain_low=0.0, gain_high=high,
                                  error_gain_low=0.0, error_gain_high=high, flagged=True)

    gain_low, gain_high = _interval(obs.gain, n, u)
    error_low, error_high = _interval(obs.qber * obs.gain, n, u)
    return ObservableInterval(gain_low=gain_low, gain_high=gain_high,
                              error_gain_low=error_low, error_gain_high=error_high,
                              flagged=False)


def _vacuum_interval(params, budget, conf):
    if budget.n_vacuum == 0:
        return 0.0, 0.0
    obs = with_counts(ChannelObservables(gain=params.y0, qber=params.e0), budget.n_vacuum)
    interval = observable_interval(obs, conf)
    return interval.gain_low, interval.gain_high


def _fluctuated_vw(params, budget, mu, nu, distance, conf):
    if budget.n_signal < 1 or budget.n_weak < 1:
        err_msg = 'signal and weak decoy need pulses, got Ns={}, Nw={}'
        raise ParameterError(err_msg.format(budget.n_signal, budget.n_weak))

    eta = transmittance(params, distance)
    obs_mu = coherent_observables(params, mu, eta)
    obs_nu = with_counts(coherent_observables(params, nu, eta), budget.n_weak)
    nu_interval = observable_interval(obs_nu, conf)
    y0_low, y0_high = _vacuum_interval(params, budget, conf)
    method = 'vacuum_weak' if budget.n_vacuum > 0 else 'one_decoy'

    # Y1 lower bound: weak gain low and vacuum yield high
    worst_nu = ChannelObservables(gain=nu_interval.gain_low, qber=obs_nu.qber)
    bounds = vacuum_weak_bounds(obs_mu, worst_nu, y0_high, mu, nu, method=method)
    if bounds.status == 'ok':
        # e1 upper bound: weak error gain high and vacuum yield low
        e1 = ((nu_interval.error_gain_high * np.exp(nu) - params.e0 * y0_low)
              / (bounds.y1_low * nu))
        bounds = bounds._replace(e1_high=float(np.clip(e1, 0.0, 1.0)))

    signal_params = update_params(params, q_basis=params.q_basis * budget.n_signal / budget.n_total)
    result = gllp_rate(signal_params, obs_mu, bounds)
    return result, bounds, y0_high, eta


def fluctuated_vw_rate(params, budget, mu, nu, distance, conf):
    """
    Vacuum+weak key rate after statistical fluctuations.

    The rate keeps only the signal pulses, q = q_basis N_s / N. Without vacuum
    pulses the one-decoy estimate (Y0 = 0) is used.

    Args:
        params:    Setup parameters
                   (Type: ExperimentParams)

        budget:    Pulse allocation
                   (Type: PulseBudget)

        mu:        Signal intensity
                   (Type: float)

        nu:        Weak decoy intensity
                   (Type: float)

        distance:  Fiber length in km
                   (Type: float)

        conf:      Confidence interval width
                   (Type: ConfidenceSpec)

    Returns:
        result:  Key rate per pulse
                 (Type: KeyRateResult)
    """
    return _fluctuated_vw(params, budget, mu, nu, distance, conf)[0]


def _split(n_total, signal_fraction, vacuum_share):
    n_signal = int(round(signal_fraction * n_total))
    n_vacuum = int(round(vacuum_share * (n_total - n_signal)))
    return make_budget(n_total, n_signal, n_vacuum)


def _objective(result):
    if result.status == 'insecure':
        return -1.0
    return result.raw


def optimize_allocation(params, n_total, distance, conf, mu=None, vacuum=True,
                        restarts=None, tol=1e-4, max_sweeps=30):
    """
    Split a pulse budget between signal, vacuum and weak decoy and pick nu so
    that the fluctuated vacuum+weak rate is largest.

    Coordinate descent over (signal fraction, vacuum share of the decoy
    pulses, nu), each coordinate maximized by golden section, started from a
    fixed lattice of eight points. The search stops when a sweep improves the
    rate by less than 1e-12.

    Args:
        params:    Setup parameters
                   (Type: ExperimentParams)

        n_total:   Total number of pulses
                   (Type: int)

        distance:  Fiber length in km
                   (Type: float)

        conf:      Confidence interval width
                   (Type: ConfidenceSpec)

    Kwargs:
        mu:          Signal intensity; the decoy optimum by default
                     (Type: float)

        vacuum:      Allow a vacuum decoy; False keeps N_vac = 0 (one decoy)
                     (Type: bool)

        restarts:    Starting points (signal fraction, vacuum share, nu / mu)
                     (Type: list[tuple])

        tol:         Golden-section tolerance on each coordinate
                     (Type: float)

        max_sweeps:  Cap on coordinate sweeps per start
                     (Type: int)

    Returns:
        allocation:  Budget, nu, rate and whether the vacuum decoy was dropped
                     (Type: AllocationResult)
    """
    if n_total < MIN_ALLOCATION_PULSES:
        err_msg = 'allocation needs at least {} pulses, got {}'
        raise ParameterError(err_msg.format(MIN_ALLOCATION_PULSES, n_total))
    n_total = int(n_total)
    if mu is None:
        mu = optimal_mu_coherent(params, transmittance(params, distance), decoy=True)
    if restarts is None:
        restarts = [(fs, fv, r) for fs in (0.5, 0.8) for fv in (0.3, 0.7) for r in (0.1, 0.4)]

    ranges = ((0.05, 0.999), (0.0, 0.99 if vacuum else 0.0), (1e-3 * mu, 0.9 * mu))

    def evaluate(x):
        budget = _split(n_total, x[0], x[1])
        return _objective(fluctuated_vw_rate(params, budget, mu, x[2], distance, conf))

    best_x = None
    best_value = -np.inf
    for start in restarts:
        x = [start[0], start[1] if vacuum else 0.0, start[2] * mu]
        value = evaluate(x)
        for sweep in range(max_sweeps):
            previous = value
            for k, (lo, hi) in enumerate(ranges):
                def along(t, k=k):
                    trial = list(x)
                    trial[k] = t
                    return evaluate(trial)
                t, v = golden_section(along, lo, hi, tol=tol * (hi - lo))
                if v > value:
                    x[k] = t
                    value = v
            if value - previous < 1e-12:
                break
        LOGGER.debug('Allocation start {} ended at {} with {:.6g}'.format(start, x, value))
        if value > best_value:
            best_x, best_value = list(x), value

    budget = _split(n_total, best_x[0], best_x[1])
    result = fluctuated_vw_rate(params, budget, mu, best_x[2], distance, conf)
    vacuum_free = budget.n_vacuum == 0
    if vacuum_free and vacuum:
        LOGGER.info('Vacuum decoy dropped at {} km, one-decoy regime'.format(distance))
    return AllocationResult(budget=budget, nu=float(best_x[2]), result=result,
                            vacuum_free=vacuum_free)


def flucsim_report(params, budget, mu, nu, distance, conf):
    """
    Relative deviations of the fluctuated estimates from the asymptotic values.

    beta_Y0 = (Y0_high - Y0)/Y0, beta_Y1 = (Y1 - Y1L)/Y1, beta_e1 = (e1U - e1)/e1
    and beta_R = (R - R_fluc)/R, where R is the infinite-decoy rate with the same
    signal share. The final key is N R_fluc bits.
    """
    result, bounds, y0_high, eta = _fluctuated_vw(params, budget, mu, nu, distance, conf)

    dist = photon_distribution('coherent', mu)
    profile = yield_error_profile(params, eta, dist.n_cut)
    truth = model_truth_bounds(dist, profile)
    signal_params = update_params(params, q_basis=params.q_basis * budget.n_signal / budget.n_total)
    reference = gllp_rate(signal_params, coherent_observables(params, mu, eta), truth)

    def beta(num, den):
        return float(num / den) if den > 0 else float('nan')

    return FlucSimReport(budget=budget, mu=float(mu), nu=float(nu), eta=float(eta),
                         y0_high=float(y0_high), y1_low=bounds.y1_low, e1_high=bounds.e1_high,
                         beta_y0=beta(y0_high - params.y0, params.y0),
                         beta_y1=beta(truth.y1_low - bounds.y1_low, truth.y1_low),
                         beta_e1=beta(bounds.e1_high - truth.e1_high, truth.e1_high),
                         beta_r=beta(reference.rate - result.rate, reference.rate),
                         rate=result.rate,
                         final_key=float(budget.n_total * result.rate))


def _trigger_obs(gains, qbers, j, n):
    return with_counts(ChannelObservables(gain=float(gains[j]), qber=float(qbers[j])), n)


def _shifted(gain, error_gain):
    if gain <= 0:
        return ChannelObservables(gain=0.0, qber=0.5)
    return ChannelObservables(gain=gain, qber=min(error_gain / gain, 1.0))


def fluctuated_trigger_rate(params, n_total, mu, eta_channel, estimator, conf,
                            nu=None, signal_fraction=0.5):
    """
    Threshold-trigger key rate of a heralded PDC source after fluctuations.

    Args:
        params:       Setup parameters
                      (Type: ExperimentParams)

        n_total:      Number of pump pulses
                      (Type: int)

        mu:           Signal pair number
                      (Type: float)

        eta_channel:  Transmittance of Bob's side
                      (Type: float)

        estimator:    'infinite' (no fluctuation), 'weak' (active decoy nu
                      taking 1 - signal_fraction of the pulses) or 'ayki'
                      (passive decoy on every pulse)
                      (Type: str)

        conf:         Confidence interval width
                      (Type: ConfidenceSpec)

    Kwargs:
        nu:               Weak decoy intensity, required for 'weak'
                          (Type: float)

        signal_fraction:  Share of the pulses at intensity mu for 'weak'
                          (Type: float)

    Returns:
        result:  Key rate per pump pulse
                 (Type: KeyRateResult)
    """
    if estimator not in TRIGGER_ESTIMATORS:
        err_msg = 'Unknown triggered estimator "{}", expected one of {}'
        raise ParameterError(err_msg.format(estimator, ', '.join(TRIGGER_ESTIMATORS)))
    n_total = int(n_total)
    per_trigger = triggering_observables(params, mu, eta_channel)

    if estimator == 'infinite':
        return triggering_rate(params, per_trigger, trig_infinite_bounds(per_trigger))

    if estimator == 'weak':
        if nu is None:
            raise ParameterError('the weak decoy estimator needs nu')
        if not 0 < signal_fraction < 1:
            raise ParameterError('signal_fraction must lie in (0, 1), got {}'.format(signal_fraction))
        n_weak = n_total - int(round(signal_fraction * n_total))
        decoy = triggering_observables(params, nu, eta_channel)
        interval = observable_interval(_trigger_obs(decoy.gains, decoy.qbers, 1, n_weak), conf)
        obs_mu = ChannelObservables(gain=float(per_trigger.gains[1]), qber=float(per_trigger.qbers[1]))
        worst_nu = _shifted(interval.gain_low, interval.error_gain_high)
        bound = trig_weak_bounds(obs_mu, worst_nu, mu, nu, params.eta_alice)
        signal_params = update_params(params, q_basis=params.q_basis * signal_fraction)
        return triggering_rate(signal_params, per_trigger, [None, bound])

    silent = observable_interval(_trigger_obs(per_trigger.gains, per_trigger.qbers, 0, n_total), conf)
    fired = observable_interval(_trigger_obs(per_trigger.gains, per_trigger.qbers, 1, n_total), conf)
    # the Y1 estimate rises with Q_{mu,0} and falls with Q_{mu,1}
    obs_j0 = _shifted(silent.gain_low, per_trigger.qbers[0] * per_trigger.gains[0])
    obs_j1 = _shifted(fired.gain_high, fired.error_gain_high)
    bound = ayki_bounds(obs_j0, obs_j1, mu, params.eta_alice,
                        f_ec=ec_inefficiency(params, per_trigger.qbers[1]))
    response = trigger_response('threshold', params.eta_alice)
    return triggering_rate(params, per_trigger, per_trigger_bounds(bound, mu, response))


def ent_epsilon(n_detections, delta_b, log_failure):
    """
    Bias of the phase error rate over the bit error rate, allowed with
    probability at most exp(log_failure):

        epsilon = sqrt(-4 log_failure delta_b (1 - delta_b) / n)
    """
    if n_detections < 1:
        raise ParameterError('need at least one detection, got {}'.format(n_detections))
    if not 0 <= delta_b <= 0.5:
        raise ParameterError('delta_b must lie in [0, 1/2], got {}'.format(delta_b))
    if log_failure > 0:
        raise ParameterError('log_failure must be nonpositive, got {}'.format(log_failure))
    if delta_b == 0 or log_failure == 0:
        return 0.0
    return float(np.sqrt(-4.0 * log_failure * delta_b * (1.0 - delta_b) / n_detections))


def fluctuated_ent_rate(params, lam, eta_a, eta_b, n_total, log_failure, n_bsteps=0):
    """
    Entanglement key rate with the phase error rate raised by epsilon, after
    n_bsteps B steps.

    Returns:
        result:  Key rate per pulse
                 (Type: KeyRateResult)
    """
    obs = ent_observables(params, lam, eta_a, eta_b)
    n = n_total * obs.gain
    if n < 1:
        LOGGER.warning('Fewer than one expected coincidence in {:.3g} pulses'.format(n_total))
        return make_rate([('sifted', 0.0)], status='clamped-zero')

    epsilon = ent_epsilon(n, obs.qber, log_failure)
    LOGGER.debug('Phase error bias {:.4g} from {:.4g} coincidences'.format(epsilon, n))
    if n_bsteps == 0:
        return koashi_preskill_rate(params, obs, epsilon=epsilon)

    residue = decoy_b_pipeline(omega=1.0, delta=obs.qber, delta_untagged=obs.qber,
                               delta_p=min(obs.qber + epsilon, 0.5), n_bsteps=n_bsteps,
                               f=lambda e: ec_inefficiency(params, e))
    return residue.scaled(params.q_basis * obs.gain)
