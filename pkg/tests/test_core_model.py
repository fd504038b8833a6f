import numpy as np
import pytest
from numpy.testing import assert_allclose

from decoyqkd.core_model import (ChannelObservables, channel_observables, coherent_observables,
                                 component_gains, ec_inefficiency, loss_transmittance,
                                 make_params, multi_photon_error, photon_distribution,
                                 transmittance, update_params, with_counts,
                                 yield_error_profile)
from decoyqkd.errors import ParameterError, UnsupportedModeError
from decoyqkd.presets import get_preset, list_presets


def test_presets_registered():
    assert list_presets() == ['gys', 'pdc144']
    assert get_preset('gys', y0=0.0).y0 == 0.0
    with pytest.raises(ParameterError):
        get_preset('nope')


@pytest.mark.parametrize('field,value', [
    ('eta_bob', 1.5),
    ('y0', -1e-6),
    ('e_detector', 2.0),
    ('q_basis', -0.1),
    ('beta', -0.2),
    ('rep_rate', 0.0),
    ('f_ec', 0.9),
    ('e0', 0.3),
])
def test_make_params_rejects(field, value):
    with pytest.raises(ParameterError):
        make_params(**{field: value})


def test_f_ec_table():
    params = make_params(f_ec=[(0.01, 1.1), (0.05, 1.3)])
    assert params.f_ec == ((0.01, 1.1), (0.05, 1.3))
    assert_allclose(ec_inefficiency(params, 0.03), 1.2, rtol=1e-12)
    # flat outside the table
    assert_allclose(ec_inefficiency(params, 0.0), 1.1, rtol=1e-12)
    assert_allclose(ec_inefficiency(params, 0.2), 1.3, rtol=1e-12)
    assert ec_inefficiency(make_params(), 0.03) == 1.22

    with pytest.raises(ParameterError):
        make_params(f_ec=[(0.05, 1.1), (0.01, 1.3)])
    with pytest.raises(ParameterError):
        make_params(f_ec=[])


def test_update_params(gys):
    changed = update_params(gys, eta_bob=0.1)
    assert changed.eta_bob == 0.1
    assert changed.y0 == gys.y0
    with pytest.raises(ParameterError):
        update_params(gys, colour='red')
    with pytest.raises(ParameterError):
        update_params(gys, eta_bob=2.0)


def test_transmittance(gys):
    assert_allclose(transmittance(gys, 0.0), 0.045)
    assert_allclose(transmittance(gys, 100.0), 3.5745e-4, rtol=1e-4)
    assert_allclose(loss_transmittance(gys, 10.0), 0.0045, rtol=1e-12)
    with pytest.raises(ParameterError):
        transmittance(gys, -1.0)
    with pytest.raises(ParameterError):
        loss_transmittance(gys, -1.0)


@pytest.mark.parametrize('kind', ['coherent', 'pdc-pair', 'pdc-entangled-pair'])
@pytest.mark.parametrize('intensity', [0.0, 0.1, 0.5, 1.0])
def test_distribution_normalized(kind, intensity):
    dist = photon_distribution(kind, intensity)
    assert dist.tail < 1e-12
    assert_allclose(dist.probs.sum() + dist.tail, 1.0, atol=1e-12)
    assert not dist.probs.flags.writeable


def test_distribution_values():
    assert_allclose(photon_distribution('coherent', 0.5).probs[1], 0.5 * np.exp(-0.5), rtol=1e-12)
    pair = photon_distribution('pdc-pair', 0.5)
    assert_allclose(pair.probs[:2], [2.0 / 3.0, 0.5 / 2.25], rtol=1e-12)
    entangled = photon_distribution('pdc-entangled-pair', 0.5)
    assert_allclose(entangled.probs[:2], [1.0 / 2.25, 1.0 / 3.375], rtol=1e-12)


def test_distribution_rejects():
    with pytest.raises(ParameterError):
        photon_distribution('thermal', 0.5)
    with pytest.raises(ParameterError):
        photon_distribution('coherent', -0.1)
    with pytest.raises(ParameterError):
        photon_distribution('coherent', 0.5, n_cut=0)


def test_yield_error_profile(gys):
    profile = yield_error_profile(gys, 0.045)
    assert_allclose(profile.y[1], 0.04500162, rtol=1e-6)
    assert_allclose(profile.e[1], 0.0330178, rtol=1e-4)
    assert profile.e[0] == 0.5
    # yields grow with the photon number
    assert np.all(np.diff(profile.y) >= 0)


def test_yield_profile_without_background(noiseless):
    profile = yield_error_profile(noiseless, 0.1, n_cut=5)
    assert profile.y[0] == 0.0
    assert_allclose(profile.y[2], 1.0 - 0.9 ** 2, rtol=1e-12)
    assert_allclose(profile.e[1:], 0.0, atol=1e-15)


def test_exclusive_background(gys):
    eta = 0.01
    profile = yield_error_profile(gys, eta, n_cut=10, exclusive_background=True)
    eta_i = 1.0 - (1.0 - eta) ** np.arange(11)
    expected = gys.e0 * gys.y0 + gys.e_detector * eta_i * (1.0 - gys.y0)
    assert_allclose(profile.e[1:] * profile.y[1:], expected[1:], rtol=1e-12)


def test_closed_form_gain(gys):
    obs = coherent_observables(gys, 0.48, 0.045)
    assert_allclose(obs.gain, 0.0213701, rtol=1e-5)
    assert_allclose(obs.qber, 0.0330372, rtol=1e-5)


@pytest.mark.parametrize('mu', [0.1, 0.5, 1.0])
@pytest.mark.parametrize('eta', [1.0, 0.045, 1e-4])
def test_series_matches_closed(gys, mu, eta):
    dist = photon_distribution('coherent', mu)
    profile = yield_error_profile(gys, eta, dist.n_cut)
    closed = channel_observables(gys, dist, profile, mode='closed')
    series = channel_observables(gys, dist, profile, mode='series')
    assert_allclose(series.gain, closed.gain, rtol=1e-10)
    assert_allclose(series.qber, closed.qber, rtol=1e-10)
    assert_allclose(component_gains(dist, profile).sum(), series.gain, rtol=1e-12)


def test_closed_mode_needs_coherent_source(gys):
    dist = photon_distribution('pdc-pair', 0.2)
    profile = yield_error_profile(gys, 0.1, dist.n_cut)
    with pytest.raises(UnsupportedModeError):
        channel_observables(gys, dist, profile, mode='closed')
    with pytest.raises(UnsupportedModeError):
        channel_observables(gys, dist, profile, mode='exact')


def test_multi_photon_error(gys):
    dist = photon_distribution('coherent', 0.5)
    profile = yield_error_profile(gys, 0.045, dist.n_cut)
    e_m = multi_photon_error(dist, profile)
    assert min(profile.e[2:]) <= e_m <= max(profile.e[2:])


def test_with_counts():
    obs = with_counts(ChannelObservables(gain=0.5, qber=0.1), 1000)
    assert obs.counts.pulses == 1000
    assert obs.counts.detections == 500
    assert obs.counts.errors == 50
    with pytest.raises(ParameterError):
        with_counts(obs, 0)
