import numpy as np
import pytest
from numpy.testing import assert_allclose

from decoyqkd.core_model import (ChannelObservables, coherent_observables, photon_distribution,
                                 transmittance, yield_error_profile)
from decoyqkd.errors import ParameterError
from decoyqkd.estimators import (SinglePhotonBounds, ayki_bounds, deviation_metrics, lp_bounds,
                                 make_observations, model_truth_bounds, nondecoy_bounds,
                                 one_decoy_bounds, per_trigger_bounds, trig_infinite_bounds,
                                 trig_nondecoy_bounds, trig_weak_bounds, vacuum_weak_bounds)
from decoyqkd.keyrate import gllp_rate
from decoyqkd.pdc_model import trigger_response, triggering_observables

MU = 0.48
NU = 0.13


def _decoy_pair(params, km):
    eta = transmittance(params, km)
    return eta, coherent_observables(params, MU, eta), coherent_observables(params, NU, eta)


def _truth(params, mu, eta):
    dist = photon_distribution('coherent', mu)
    return dist, model_truth_bounds(dist, yield_error_profile(params, eta, dist.n_cut))


def _split(per_trigger, j):
    return ChannelObservables(gain=per_trigger.gains[j], qber=per_trigger.qbers[j])


@pytest.mark.parametrize('km,y1,e1,rate', [
    (0.0, 0.043356, 0.038913, 2.181e-3),
    (70.0, 1.46798e-3, 0.039651, 6.96e-5),
])
def test_vacuum_weak_values(gys, km, y1, e1, rate):
    _, obs_mu, obs_nu = _decoy_pair(gys, km)
    bounds = vacuum_weak_bounds(obs_mu, obs_nu, gys.y0, MU, NU)
    assert bounds.status == 'ok'
    assert bounds.method == 'vacuum_weak'
    assert_allclose(bounds.y1_low, y1, rtol=5e-4)
    assert_allclose(bounds.e1_high, e1, rtol=5e-4)
    assert_allclose(gllp_rate(gys, obs_mu, bounds).rate, rate, rtol=5e-3)


def test_vacuum_weak_at_130_km(gys):
    _, obs_mu, obs_nu = _decoy_pair(gys, 130.0)
    bounds = vacuum_weak_bounds(obs_mu, obs_nu, gys.y0, MU, NU)
    assert_allclose(bounds.y1_low, 8.2253e-5, rtol=1e-3)
    assert_allclose(bounds.e1_high, 0.04932, rtol=2e-3)
    assert_allclose(gllp_rate(gys, obs_mu, bounds).rate, 1.22e-6, rtol=0.05)


def test_one_decoy_values(gys):
    _, obs_mu, obs_nu = _decoy_pair(gys, 0.0)
    bounds = one_decoy_bounds(obs_mu, obs_nu, MU, NU)
    assert bounds.method == 'one_decoy'
    assert_allclose(bounds.y1_low, 0.043373, rtol=5e-4)
    assert_allclose(bounds.e1_high, 0.039049, rtol=5e-4)
    assert_allclose(gllp_rate(gys, obs_mu, bounds).rate, 2.179e-3, rtol=5e-3)


@pytest.mark.parametrize('km', [0.0, 50.0, 120.0])
def test_one_decoy_is_vacuum_weak_without_vacuum_yield(gys, km):
    _, obs_mu, obs_nu = _decoy_pair(gys, km)
    single = one_decoy_bounds(obs_mu, obs_nu, MU, NU)
    paired = vacuum_weak_bounds(obs_mu, obs_nu, 0.0, MU, NU)
    assert single.y1_low == paired.y1_low
    assert single.e1_high == paired.e1_high
    assert single.status == paired.status


def test_vacuum_weak_is_a_safe_bound(gys):
    rng = np.random.default_rng(1234)
    for _ in range(200):
        mu = rng.uniform(0.2, 0.9)
        nu = rng.uniform(0.02, 0.9 * mu)
        eta = 10.0 ** rng.uniform(-5.0, np.log10(0.5))
        obs_mu = coherent_observables(gys, mu, eta)
        obs_nu = coherent_observables(gys, nu, eta)
        _, truth = _truth(gys, mu, eta)

        bounds = vacuum_weak_bounds(obs_mu, obs_nu, gys.y0, mu, nu)
        assert bounds.y1_low <= truth.y1_low * (1.0 + 1e-9)
        assert bounds.e1_high >= truth.e1_high * (1.0 - 1e-9)


def test_decoy_intensities_rejected(gys):
    _, obs_mu, obs_nu = _decoy_pair(gys, 0.0)
    with pytest.raises(ParameterError):
        vacuum_weak_bounds(obs_mu, obs_nu, gys.y0, MU, MU)
    with pytest.raises(ParameterError):
        vacuum_weak_bounds(obs_mu, obs_nu, gys.y0, NU, MU)
    with pytest.raises(ParameterError):
        one_decoy_bounds(obs_mu, obs_nu, MU, 0.0)
    with pytest.raises(ParameterError):
        vacuum_weak_bounds(obs_mu, obs_nu, -1e-6, MU, NU)


def test_nondecoy_at_mu_equal_eta(gys):
    obs = coherent_observables(gys, 0.045, 0.045)
    bounds = nondecoy_bounds(obs, 0.045)
    assert bounds.method == 'nondecoy'
    assert_allclose(gllp_rate(gys, obs, bounds).rate, 8.05e-5, rtol=0.03)

    # far out the multi-photon mass swallows the gain
    far = coherent_observables(gys, 0.5, transmittance(gys, 100.0))
    assert nondecoy_bounds(far, 0.5).status == 'insecure'
    with pytest.raises(ParameterError):
        nondecoy_bounds(obs, 0.0)


def test_insecure_bounds_are_zeroed(gys, caplog):
    obs_mu = ChannelObservables(gain=1e-3, qber=0.03)
    obs_nu = ChannelObservables(gain=1e-6, qber=0.03)
    bounds = vacuum_weak_bounds(obs_mu, obs_nu, 0.0, MU, NU)
    assert bounds.status == 'insecure'
    assert bounds.y1_low == 0.0
    assert bounds.q1_low == 0.0
    assert bounds.e1_high == 0.5
    assert 'flagged insecure' in caplog.text


def test_make_observations():
    obs = ChannelObservables(gain=0.01, qber=0.03)
    packed = make_observations([(0.5, obs), (0.1, obs)], vacuum_gain=1e-6)
    assert [k for k, _ in packed.entries] == [0.1, 0.5]
    assert packed.vacuum_gain == 1e-6
    with pytest.raises(ParameterError):
        make_observations([])
    with pytest.raises(ParameterError):
        make_observations([(0.1, obs), (0.1, obs)])
    with pytest.raises(ParameterError):
        make_observations([(-0.1, obs)])
    with pytest.raises(ParameterError):
        make_observations([(0.1, obs)], vacuum_gain=2.0)


def test_lp_between_vacuum_weak_and_truth(gys):
    eta, obs_mu, obs_nu = _decoy_pair(gys, 0.0)
    dist, truth = _truth(gys, MU, eta)
    analytic = vacuum_weak_bounds(obs_mu, obs_nu, gys.y0, MU, NU)

    observations = make_observations([(MU, obs_mu), (NU, obs_nu)], vacuum_gain=gys.y0)
    bounds = lp_bounds(observations, dist)
    assert bounds.method == 'lp'
    assert bounds.status == 'ok'
    assert analytic.y1_low * (1.0 - 1e-6) <= bounds.y1_low <= truth.y1_low * (1.0 + 1e-6)
    assert bounds.e1_high <= analytic.e1_high * 1.01

    rate = gllp_rate(gys, obs_mu, bounds).rate
    assert gllp_rate(gys, obs_mu, analytic).rate * (1.0 - 1e-3) <= rate
    assert rate <= gllp_rate(gys, obs_mu, truth).rate * (1.0 + 1e-6)


def test_lp_rejects_short_truncation(gys):
    eta, obs_mu, obs_nu = _decoy_pair(gys, 0.0)
    observations = make_observations([(MU, obs_mu), (NU, obs_nu)])
    with pytest.raises(ParameterError):
        lp_bounds(observations, photon_distribution('coherent', MU), n_cut=1)


def test_trig_weak_is_a_safe_bound(pdc144):
    eta = pdc144.eta_bob
    per_mu = triggering_observables(pdc144, 0.5, eta)
    per_nu = triggering_observables(pdc144, 0.1, eta)
    bounds = trig_weak_bounds(_split(per_mu, 1), _split(per_nu, 1), 0.5, 0.1, pdc144.eta_alice)
    assert bounds.status == 'ok'
    assert 0.0 < bounds.y1_low <= per_mu.y1
    assert bounds.e1_high >= per_mu.e1
    with pytest.raises(ParameterError):
        trig_weak_bounds(_split(per_mu, 1), _split(per_nu, 1), 0.1, 0.5, pdc144.eta_alice)
    with pytest.raises(ParameterError):
        trig_weak_bounds(_split(per_mu, 1), _split(per_nu, 1), 0.5, 0.1, 0.0)


def test_ayki_is_a_safe_bound(pdc144):
    mu = 0.1
    per_trigger = triggering_observables(pdc144, mu, pdc144.eta_bob)
    obs_j0 = _split(per_trigger, 0)
    bounds = ayki_bounds(obs_j0, _split(per_trigger, 1), mu, pdc144.eta_alice)
    assert bounds.method == 'ayki'
    assert bounds.status == 'ok'
    assert bounds.y1_low <= per_trigger.y1
    assert bounds.e1_high >= per_trigger.e1
    # the worst case charges the largest vacuum gain the QBER allows
    assert_allclose(bounds.q0_low, obs_j0.qber * obs_j0.gain / 0.5, rtol=1e-9)
    assert_allclose(bounds.q1_low, mu / (1.0 + mu) ** 2 * pdc144.eta_alice * bounds.y1_low)


def test_ayki_tight_when_every_pair_triggers(pdc144):
    params = pdc144._replace(eta_alice=1.0)
    mu = 0.1
    per_trigger = triggering_observables(params, mu, params.eta_bob)
    obs_j0, obs_j1 = _split(per_trigger, 0), _split(per_trigger, 1)
    bounds = ayki_bounds(obs_j0, obs_j1, mu, 1.0)
    assert bounds.status == 'ok'
    # the non-triggered detections are all vacuum and the bound reaches Y1
    assert_allclose(bounds.q0_low, obs_j0.gain, rtol=1e-12)
    assert_allclose(bounds.y1_low, per_trigger.y1, rtol=1e-9)
    assert bounds.e1_high >= per_trigger.e1
    assert_allclose(bounds.q1_low, per_trigger.q1[1], rtol=1e-9)


def test_ayki_approaches_the_tight_limit(pdc144):
    mu = 0.1
    bounds = []
    for eta_a in (1.0, 1.0 - 1e-3):
        per_trigger = triggering_observables(pdc144._replace(eta_alice=eta_a), mu, pdc144.eta_bob)
        bounds.append(ayki_bounds(_split(per_trigger, 0), _split(per_trigger, 1), mu, eta_a))
    limit, near = bounds
    # the worst-case vacuum gain keeps a factor 1 - 2 e_d below the limit
    assert 0.95 * limit.y1_low <= near.y1_low <= limit.y1_low


def test_ayki_without_triggers(pdc144):
    params = pdc144._replace(eta_alice=0.0)
    mu = 0.1
    per_trigger = triggering_observables(params, mu, params.eta_bob)
    obs_j0, obs_j1 = _split(per_trigger, 0), _split(per_trigger, 1)
    assert obs_j1.gain == 0.0
    bounds = ayki_bounds(obs_j0, obs_j1, mu, 0.0)
    assert bounds.status == 'ok'
    assert 0.0 < bounds.y1_low <= per_trigger.y1
    assert bounds.e1_high >= per_trigger.e1
    assert_allclose(bounds.q1_low, mu / (1.0 + mu) ** 2 * bounds.y1_low, rtol=1e-12)

    split = per_trigger_bounds(bounds, mu, trigger_response('threshold', 0.0))
    assert split[1].status == 'insecure'
    assert_allclose(split[0].q1_low, bounds.q1_low, rtol=1e-12)


@pytest.mark.parametrize('eta_a', [-0.1, 1.1])
def test_ayki_rejects_efficiency(eta_a):
    obs = ChannelObservables(gain=0.01, qber=0.03)
    with pytest.raises(ParameterError):
        ayki_bounds(obs, obs, 0.1, eta_a)


def test_trig_nondecoy_below_truth(pdc144):
    mu = 0.1
    per_trigger = triggering_observables(pdc144, mu, pdc144.eta_bob)
    bounds = trig_nondecoy_bounds(per_trigger, mu, pdc144.eta_alice)
    assert len(bounds) == 2
    assert bounds[1].method == 'trig_nondecoy'
    assert bounds[1].q1_low <= per_trigger.q1[1] * (1.0 + 1e-12)
    with pytest.raises(ParameterError):
        trig_nondecoy_bounds(per_trigger, 0.0, pdc144.eta_alice)


def test_trig_infinite_bounds(pdc144):
    threshold = triggering_observables(pdc144, 0.5, 0.01)
    bounds = trig_infinite_bounds(threshold)
    assert [b.q1_low for b in bounds] == list(threshold.q1)
    assert bounds[0].y1_low == threshold.y1

    pnr = triggering_observables(pdc144, 0.5, 0.01, response='perfect-pnr')
    bounds = trig_infinite_bounds(pnr)
    assert bounds[0] is None
    assert bounds[2] is None
    assert bounds[1].q1_low == pnr.q1[1]


def test_per_trigger_bounds():
    response = trigger_response('threshold', 0.25, n_cut=5)
    bounds = SinglePhotonBounds(y1_low=0.1, e1_high=0.03, q1_low=0.0)
    split = per_trigger_bounds(bounds, 1.0, response)
    assert_allclose([b.q1_low for b in split], [0.25 * 0.75 * 0.1, 0.25 * 0.25 * 0.1])

    insecure = per_trigger_bounds(bounds._replace(status='insecure'), 1.0, response)
    assert all(b.q1_low == 0.0 and b.status == 'insecure' for b in insecure)


def test_deviation_metrics(caplog):
    truth = SinglePhotonBounds(y1_low=0.05, e1_high=0.02, q1_low=0.01)
    bounds = SinglePhotonBounds(y1_low=0.04, e1_high=0.03, q1_low=0.008)
    metrics = deviation_metrics(bounds, truth)
    assert_allclose(metrics.beta_y1, 0.2)
    assert_allclose(metrics.beta_e1, 0.5)

    undefined = deviation_metrics(bounds, truth._replace(e1_high=0.0))
    assert np.isnan(undefined.beta_e1)
    assert 'beta_e1 undefined' in caplog.text
