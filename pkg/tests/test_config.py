import glob
import os

import pytest

from decoyqkd.errors import ConfigError
from scenario.config import load_config, parse_config, read_sections, scenario_as_dict

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'scenarios')

VALID = """
# vacuum+weak decoys on the fiber setup
[scenario]
name = vw
estimator = vacuum_weak
mu = 0.48
nu = 0.13

[params]
e_detector = 0.02   # better alignment

[sweep]
start = 10
stop = 50
step = 20
"""


def test_parse_valid_config():
    scenario = parse_config(VALID)
    assert scenario.name == 'vw'
    assert scenario.preset == 'gys'
    assert scenario.source == 'coherent'
    assert scenario.estimator == 'vacuum_weak'
    assert (scenario.mu, scenario.nu) == (0.48, 0.13)
    assert scenario.mu_policy == 'fixed'
    assert scenario.params.e_detector == 0.02
    assert scenario.params.eta_bob == 0.045
    assert (scenario.axis, scenario.start, scenario.stop, scenario.step) == ('km', 10.0, 50.0, 20.0)
    assert scenario.fluctuation is None


def test_defaults():
    scenario = parse_config('')
    assert scenario.preset == 'gys'
    assert scenario.source == 'coherent'
    assert scenario.estimator == 'infinite'
    assert scenario.postprocess == 'one_locc'
    assert scenario.n_bsteps == 0
    assert scenario.mu is None
    assert scenario.mu_policy == 'optimized'
    assert scenario.mode == 'closed'
    assert scenario.geometry == 'middle'
    assert (scenario.axis, scenario.start, scenario.stop, scenario.step) == ('km', 0.0, 150.0, 1.0)
    assert scenario.verify == (10 ** 6, 5.0)


def test_preset_override():
    text = '[scenario]\npreset = gys\nsource = pdc-pair\n'
    scenario = parse_config(text, preset='pdc144')
    assert scenario.preset == 'pdc144'
    assert scenario.axis == 'dB'
    assert scenario.estimator == 'trig_infinite'
    assert scenario.params.name == 'pdc144'

    with pytest.raises(ConfigError):
        parse_config('', preset='lab')


def test_unknown_key_reports_line():
    text = '[scenario]\nname = x\ncolour = red\n'
    with pytest.raises(ConfigError) as exc_info:
        parse_config(text)
    assert exc_info.value.lineno == 3
    assert str(exc_info.value).startswith('line 3:')
    assert 'colour' in str(exc_info.value)


@pytest.mark.parametrize('text,lineno', [
    ('[scenario]\n[results]\n', 2),
    ('[scenario\n', 1),
    ('name = x\n', 1),
    ('[scenario]\nname\n', 2),
    ('[scenario]\nname = a\nname = b\n', 3),
    ('[sweep]\n[sweep]\n', 2),
    ('[scenario]\nname =\n', 2),
])
def test_malformed_text(text, lineno):
    with pytest.raises(ConfigError) as exc_info:
        read_sections(text)
    assert exc_info.value.lineno == lineno


@pytest.mark.parametrize('text', [
    '[scenario]\nmu = -1\n',
    '[scenario]\nmu = 1.5\n',
    '[scenario]\nmu = high\n',
    '[scenario]\nsource = thermal\n',
    '[scenario]\npostprocess = twoway\n',
    '[scenario]\nn_bsteps = 1.5\n',
    '[scenario]\nn_bsteps = 0\n',
    '[sweep]\naxis = m\n',
    '[sweep]\nstart = -5\n',
    '[fluctuation]\nlog_failure = 3\n',
    '[fluctuation]\nsignal_fraction = 1\n',
    '[entanglement]\ngeometry = bob\n',
])
def test_invalid_values(text):
    with pytest.raises(ConfigError) as exc_info:
        read_sections(text)
    assert exc_info.value.lineno == 2


def test_f_ec_table():
    sections = read_sections('[params]\nf_ec = 0.01:1.1, 0.05:1.3\n')
    assert sections['params']['f_ec'] == (((0.01, 1.1), (0.05, 1.3)), 2)
    assert read_sections('[params]\nf_ec = 1.16\n')['params']['f_ec'][0] == 1.16

    scenario = parse_config('[params]\nf_ec = 0.01:1.1, 0.05:1.3\n')
    assert scenario.params.f_ec == ((0.01, 1.1), (0.05, 1.3))

    with pytest.raises(ConfigError):
        read_sections('[params]\nf_ec = 0.01:1.1:2\n')


def test_invalid_params():
    with pytest.raises(ConfigError):
        parse_config('[params]\neta_bob = 2\n')
    with pytest.raises(ConfigError):
        parse_config('[params]\nf_ec = 0.9\n')


def test_estimator_must_match_source():
    with pytest.raises(ConfigError) as exc_info:
        parse_config('[scenario]\nsource = coherent\nestimator = ayki\n')
    assert exc_info.value.lineno == 3
    assert parse_config('[scenario]\nsource = pdc-pair\nestimator = ayki\n').estimator == 'ayki'


def test_bsteps():
    assert parse_config('[scenario]\npostprocess = bsteps\n').n_bsteps == 1
    assert parse_config('[scenario]\npostprocess = bsteps\nn_bsteps = 3\n').n_bsteps == 3
    with pytest.raises(ConfigError):
        parse_config('[scenario]\nn_bsteps = 3\n')
    with pytest.raises(ConfigError):
        parse_config('[scenario]\nsource = pdc-pair\npostprocess = bsteps\n')


def test_recurrence_needs_infinite_decoys():
    text = '[scenario]\nestimator = vacuum_weak\npostprocess = recurrence\n'
    with pytest.raises(ConfigError):
        parse_config(text)
    scenario = parse_config('[scenario]\nsource = pdc-entangled-pair\npostprocess = recurrence\n')
    assert scenario.estimator == 'koashi_preskill'


def test_intensity_policies():
    with pytest.raises(ConfigError):
        parse_config('[scenario]\nmu_policy = fixed\n')
    with pytest.raises(ConfigError):
        parse_config('[scenario]\nestimator = vacuum_weak\nmu = 0.1\nnu = 0.2\n')
    # the decoy may match mu when it is not used
    assert parse_config('[scenario]\nmu = 0.1\nnu = 0.2\n').mu_policy == 'fixed'
    scenario = parse_config('[scenario]\nmu = 0.3\nmu_policy = optimized\n')
    assert scenario.mu_policy == 'optimized'


@pytest.mark.parametrize('step', ['0', '-1'])
def test_step_must_be_positive(step):
    with pytest.raises(ConfigError):
        parse_config('[sweep]\nstep = {}\n'.format(step))


def test_fluctuation_section():
    text = '[scenario]\nestimator = vacuum_weak\n[fluctuation]\nn_total = 1e10\n'
    spec = parse_config(text).fluctuation
    assert spec == (10 ** 10, 10.0, 0.0, 0.5)

    with pytest.raises(ConfigError):
        parse_config('[scenario]\nestimator = vacuum_weak\n[fluctuation]\nu = 5\n')
    with pytest.raises(ConfigError):
        parse_config('[fluctuation]\nn_total = 1e10\n')
    with pytest.raises(ConfigError):
        parse_config('[scenario]\nsource = pdc-pair\nestimator = pnr\n[fluctuation]\nn_total = 1e10\n')
    with pytest.raises(ConfigError):
        parse_config('[scenario]\nestimator = vacuum_weak\n[sweep]\naxis = dB\n'
                     '[fluctuation]\nn_total = 1e10\n')


def test_scenario_as_dict():
    d = scenario_as_dict(parse_config(VALID))
    assert d['params']['e_detector'] == 0.02
    assert d['fluctuation'] is None
    assert d['verify'] == {'n_pulses': 10 ** 6, 'sigma': 5.0}


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / 'missing.cfg'))


@pytest.mark.parametrize('path', sorted(glob.glob(os.path.join(SCENARIO_DIR, '*.cfg'))))
def test_bundled_scenarios_parse(path):
    scenario = load_config(path)
    assert scenario.name == os.path.splitext(os.path.basename(path))[0].replace('_', '-')
