"""
Composition of the library modules into one rate evaluation per sweep point.

For a scenario and an axis value, `make_rate_fn` returns a function of the
signal intensity (mu, or lambda for entangled sources) that produces a
PointResult. `evaluate_point` picks the intensity according to the mu policy
and turns the result into a table row.
"""
import logging
from collections import namedtuple

import numpy as np

from decoyqkd.core_model import (ChannelObservables, channel_observables, coherent_observables,
                                 ec_inefficiency, loss_transmittance, photon_distribution,
                                 transmittance, yield_error_profile)
from decoyqkd.errors import ConfigError, QKDError
from decoyqkd.estimators import (ayki_bounds, lp_bounds, make_observations, model_truth_bounds,
                                 nondecoy_bounds, one_decoy_bounds, per_trigger_bounds,
                                 trig_infinite_bounds, trig_nondecoy_bounds, trig_weak_bounds,
                                 vacuum_weak_bounds)
from decoyqkd.fluctuation import (flucsim_report, fluctuated_ent_rate, fluctuated_trigger_rate,
                                  make_confidence, optimize_allocation)
from decoyqkd.keyrate import gllp_rate, koashi_preskill_rate, make_rate, triggering_rate
from decoyqkd.optimize import MU_BRACKET, maximize_scalar, optimal_mu_coherent
from decoyqkd.pdc_model import (ent_observables, entanglement_arms, trigger_response,
                                triggering_observables)
from decoyqkd.twoway import TaggedInput, decoy_b_pipeline, recurrence_input, recurrence_residue

LOGGER = logging.getLogger('scenario')
LOGGER.setLevel(logging.DEBUG)

ROW_COLUMNS = ('axis', 'mu', 'gain', 'qber', 'y1_low', 'e1_high', 'rate', 'status')

## Estimators that need a weak decoy below the signal intensity
WEAK_DECOY_ESTIMATORS = ('vacuum_weak', 'one_decoy', 'lp', 'trig_weak')

## Fluctuated triggered estimators by scenario estimator name
TRIGGER_FLUCTUATION = {
    'trig_infinite': 'infinite',
    'trig_weak': 'weak',
    'ayki': 'ayki',
}

PointResult = namedtuple('PointResult', ['result', 'gain', 'qber', 'y1_low', 'e1_high'])


def channel_eta(scenario, x):
    """
    Overall transmittance of Bob's side at axis value x (km or dB).
    """
    if scenario.axis == 'km':
        return transmittance(scenario.params, x)
    if scenario.axis == 'dB':
        return loss_transmittance(scenario.params, x)
    raise ConfigError('axis "{}" cannot be turned into a channel'.format(scenario.axis))


def channel_arms(scenario, x):
    """
    Arm transmittances of an entangled source at axis value x.
    """
    if scenario.axis == 'km':
        loss_db = scenario.params.beta * x
    elif scenario.axis == 'dB':
        loss_db = x
    else:
        raise ConfigError('axis "{}" cannot be turned into a channel'.format(scenario.axis))
    return entanglement_arms(scenario.params, loss_db, scenario.geometry)


def mu_bracket(scenario):
    if scenario.estimator in WEAK_DECOY_ESTIMATORS:
        return (scenario.nu * 1.01, MU_BRACKET[1])
    return MU_BRACKET


def _f(params):
    return lambda e: ec_inefficiency(params, e)


def _insecure():
    return make_rate([('privacy_amplification', 0.0)], status='insecure')


def _coherent_bounds(scenario, mu, eta, dist, profile, obs):
    params = scenario.params
    estimator = scenario.estimator
    if estimator == 'infinite':
        return model_truth_bounds(dist, profile)
    if estimator == 'nondecoy':
        return nondecoy_bounds(obs, mu)

    nu = scenario.nu
    obs_nu = coherent_observables(params, nu, eta, mode=scenario.mode, n_cut=scenario.n_cut)
    if estimator == 'vacuum_weak':
        return vacuum_weak_bounds(obs, obs_nu, params.y0, mu, nu)
    if estimator == 'one_decoy':
        return one_decoy_bounds(obs, obs_nu, mu, nu)
    observations = make_observations([(mu, obs), (nu, obs_nu)], vacuum_gain=params.y0)
    return lp_bounds(observations, dist)


def coherent_point(scenario, mu, eta):
    """
    Rate of a coherent source at intensity mu and transmittance eta.
    """
    params = scenario.params
    dist = photon_distribution('coherent', mu, scenario.n_cut)
    profile = yield_error_profile(params, eta, dist.n_cut)
    obs = channel_observables(params, dist, profile, mode=scenario.mode)
    bounds = _coherent_bounds(scenario, mu, eta, dist, profile, obs)

    if scenario.postprocess == 'one_locc':
        result = gllp_rate(params, obs, bounds)
    elif scenario.postprocess == 'bsteps':
        if bounds.status == 'insecure':
            result = _insecure()
        else:
            omega = min(bounds.q1_low / obs.gain, 1.0)
            residue = decoy_b_pipeline(omega, obs.qber, bounds.e1_high, bounds.e1_high,
                                       scenario.n_bsteps, f=_f(params))
            result = residue.scaled(params.q_basis * obs.gain)
    else:
        residue = recurrence_residue(recurrence_input(dist, profile), obs.qber, f=_f(params))
        result = residue.scaled(params.q_basis * obs.gain)

    return PointResult(result=result, gain=obs.gain, qber=obs.qber,
                       y1_low=bounds.y1_low, e1_high=bounds.e1_high)


def _summed(per_trigger):
    gain = float(np.sum(per_trigger.gains))
    if gain <= 0:
        return 0.0, float('nan')
    return gain, float(np.dot(per_trigger.gains, per_trigger.qbers) / gain)


def _heralded(bounds):
    if len(bounds) > 1 and bounds[1] is not None:
        return bounds[1]
    return bounds[0]


def triggered_point(scenario, mu, eta):
    """
    Rate of a triggered PDC source; gains and QBER are summed over trigger outcomes.
    """
    params = scenario.params
    estimator = scenario.estimator

    if estimator == 'pnr':
        per_trigger = triggering_observables(params, mu, eta, response='perfect-pnr',
                                             n_cut=scenario.n_cut)
        bounds = trig_infinite_bounds(per_trigger)
        result = triggering_rate(params, per_trigger, bounds, mode='pnr')
    else:
        per_trigger = triggering_observables(params, mu, eta, mode=scenario.mode,
                                             n_cut=scenario.n_cut)
        if estimator == 'trig_nondecoy':
            bounds = trig_nondecoy_bounds(per_trigger, mu, params.eta_alice)
        elif estimator == 'trig_infinite':
            bounds = trig_infinite_bounds(per_trigger)
        elif estimator == 'trig_weak':
            decoy = triggering_observables(params, scenario.nu, eta, mode=scenario.mode,
                                           n_cut=scenario.n_cut)
            obs_mu = ChannelObservables(gain=float(per_trigger.gains[1]),
                                        qber=float(per_trigger.qbers[1]))
            obs_nu = ChannelObservables(gain=float(decoy.gains[1]), qber=float(decoy.qbers[1]))
            bounds = [None, trig_weak_bounds(obs_mu, obs_nu, mu, scenario.nu, params.eta_alice)]
        else:
            obs_j0 = ChannelObservables(gain=float(per_trigger.gains[0]),
                                        qber=float(per_trigger.qbers[0]))
            obs_j1 = ChannelObservables(gain=float(per_trigger.gains[1]),
                                        qber=float(per_trigger.qbers[1]))
            bound = ayki_bounds(obs_j0, obs_j1, mu, params.eta_alice,
                                f_ec=ec_inefficiency(params, obs_j1.qber))
            bounds = per_trigger_bounds(bound, mu, trigger_response('threshold', params.eta_alice))
        result = triggering_rate(params, per_trigger, bounds)

    gain, qber = _summed(per_trigger)
    heralded = _heralded(bounds)
    return PointResult(result=result, gain=gain, qber=qber,
                       y1_low=heralded.y1_low, e1_high=heralded.e1_high)


def entangled_point(scenario, lam, eta_a, eta_b):
    """
    Rate of an entangled PDC source at pair number lambda.
    """
    params = scenario.params
    obs = ent_observables(params, lam, eta_a, eta_b, mode=scenario.mode, n_cut=scenario.n_cut)

    if scenario.postprocess == 'one_locc':
        result = koashi_preskill_rate(params, obs)
    elif scenario.postprocess == 'bsteps':
        residue = decoy_b_pipeline(1.0, obs.qber, obs.qber, obs.qber, scenario.n_bsteps,
                                   f=_f(params))
        result = residue.scaled(params.q_basis * obs.gain)
    else:
        # every coincidence counts as a single pair
        inp = TaggedInput(omega_v=0.0, omega=1.0, omega_m=0.0, e1=obs.qber, e_m=0.0)
        residue = recurrence_residue(inp, min(obs.qber, 0.5), f=_f(params))
        result = residue.scaled(params.q_basis * obs.gain)

    return PointResult(result=result, gain=obs.gain, qber=obs.qber,
                       y1_low=float('nan'), e1_high=float('nan'))


def _fixed_coherent_mu(scenario, eta):
    if scenario.mu_policy == 'fixed':
        return scenario.mu
    return optimal_mu_coherent(scenario.params, eta, decoy=True)


def fluctuated_coherent_point(scenario, x, mu):
    """
    Finite-data vacuum+weak (or one-decoy) rate with the pulse allocation and
    the weak intensity optimized at this distance.
    """
    params = scenario.params
    spec = scenario.fluctuation
    conf = make_confidence(spec.u, spec.log_failure)
    allocation = optimize_allocation(params, spec.n_total, x, conf, mu=mu,
                                     vacuum=scenario.estimator == 'vacuum_weak')
    report = flucsim_report(params, allocation.budget, mu, allocation.nu, x, conf)
    obs = coherent_observables(params, mu, report.eta)
    return PointResult(result=allocation.result, gain=obs.gain, qber=obs.qber,
                       y1_low=report.y1_low, e1_high=report.e1_high)


def fluctuated_triggered_point(scenario, mu, eta):
    params = scenario.params
    spec = scenario.fluctuation
    conf = make_confidence(spec.u, spec.log_failure)
    result = fluctuated_trigger_rate(params, spec.n_total, mu, eta,
                                     TRIGGER_FLUCTUATION[scenario.estimator], conf,
                                     nu=scenario.nu, signal_fraction=spec.signal_fraction)
    gain, qber = _summed(triggering_observables(params, mu, eta))
    return PointResult(result=result, gain=gain, qber=qber,
                       y1_low=float('nan'), e1_high=float('nan'))


def fluctuated_entangled_point(scenario, lam, eta_a, eta_b):
    params = scenario.params
    spec = scenario.fluctuation
    obs = ent_observables(params, lam, eta_a, eta_b)
    result = fluctuated_ent_rate(params, lam, eta_a, eta_b, spec.n_total, spec.log_failure,
                                 n_bsteps=scenario.n_bsteps)
    return PointResult(result=result, gain=obs.gain, qber=obs.qber,
                       y1_low=float('nan'), e1_high=float('nan'))


def make_rate_fn(scenario, x):
    """
    Rate of the scenario at axis value x as a function of the intensity.

    Args:
        scenario:  Validated scenario
                   (Type: Scenario)

        x:         Axis value, km or dB
                   (Type: float)

    Returns:
        rate_fn:  Maps mu (lambda for entangled sources) to a PointResult
                  (Type: callable)
    """
    if scenario.source == 'pdc-entangled-pair':
        eta_a, eta_b = channel_arms(scenario, x)
        if scenario.fluctuation is not None:
            return lambda lam: fluctuated_entangled_point(scenario, lam, eta_a, eta_b)
        return lambda lam: entangled_point(scenario, lam, eta_a, eta_b)

    eta = channel_eta(scenario, x)
    if scenario.source == 'pdc-pair':
        if scenario.fluctuation is not None:
            return lambda mu: fluctuated_triggered_point(scenario, mu, eta)
        return lambda mu: triggered_point(scenario, mu, eta)

    if scenario.fluctuation is not None:
        return lambda mu: fluctuated_coherent_point(scenario, x, mu)
    return lambda mu: coherent_point(scenario, mu, eta)


def choose_intensity(scenario, x, rate_fn):
    """
    Intensity used at axis value x and the point evaluated there.
    """
    if scenario.mu_policy == 'fixed':
        return scenario.mu, rate_fn(scenario.mu)
    if scenario.source == 'coherent' and scenario.fluctuation is not None:
        # the allocation search runs at the decoy optimum
        mu = _fixed_coherent_mu(scenario, channel_eta(scenario, x))
        return mu, rate_fn(mu)
    if scenario.source == 'coherent' and scenario.estimator == 'nondecoy':
        # without decoys the signal runs at mu = eta
        mu = min(channel_eta(scenario, x), MU_BRACKET[1])
        return mu, rate_fn(mu)
    mu, _ = maximize_scalar(lambda m: rate_fn(m).result, bracket=mu_bracket(scenario))
    return mu, rate_fn(mu)


def make_row(x, mu, point):
    return {
        'axis': float(x),
        'mu': float(mu),
        'gain': float(point.gain),
        'qber': float(point.qber),
        'y1_low': float(point.y1_low),
        'e1_high': float(point.e1_high),
        'rate': float(point.result.rate),
        'status': point.result.status,
    }


def evaluate_point(scenario, x):
    """
    One table row of the scenario at axis value x. Library errors are re-raised
    with the scenario name and the axis value attached.

    Returns:
        row:  Values keyed by ROW_COLUMNS
              (Type: dict)
    """
    try:
        rate_fn = make_rate_fn(scenario, x)
        mu, point = choose_intensity(scenario, x, rate_fn)
    except QKDError as exc:
        err_msg = 'scenario {}, axis value {}: {}'
        raise type(exc)(err_msg.format(scenario.name, x, exc)) from exc
    LOGGER.debug('{} at {} {}: mu = {:.6g}, rate = {:.6g}'.format(
        scenario.name, x, scenario.axis, mu, point.result.rate))
    return make_row(x, mu, point)
