"""
Scenario configuration files.

A configuration is a line-oriented text of `key = value` pairs under
`[section]` headers; `#` starts a comment. Every section has a closed set
of keys and anything else is rejected with the offending line number.
"""
import functools
import logging
from collections import namedtuple

from decoyqkd.core_model import ExperimentParams, SOURCE_KINDS
from decoyqkd.errors import ConfigError, ParameterError
from decoyqkd.pdc_model import ARM_GEOMETRIES
from decoyqkd.presets import PRESET_AXES, get_preset, list_presets

LOGGER = logging.getLogger('scenario')
LOGGER.setLevel(logging.DEBUG)

ESTIMATORS = {
    'coherent': ('nondecoy', 'infinite', 'vacuum_weak', 'one_decoy', 'lp'),
    'pdc-pair': ('trig_nondecoy', 'trig_infinite', 'trig_weak', 'ayki', 'pnr'),
    'pdc-entangled-pair': ('koashi_preskill',),
}
DEFAULT_ESTIMATOR = {
    'coherent': 'infinite',
    'pdc-pair': 'trig_infinite',
    'pdc-entangled-pair': 'koashi_preskill',
}
POSTPROCESS = ('one_locc', 'bsteps', 'recurrence')
MU_POLICIES = ('fixed', 'optimized')
MODES = ('closed', 'series')
AXES = ('km', 'dB', 'delta')

## Default sweep (start, stop, step) per axis
DEFAULT_SWEEPS = {
    'km': (0.0, 150.0, 1.0),
    'dB': (0.0, 40.0, 1.0),
    'delta': (0.0, 0.3, 0.01),
}

Scenario = namedtuple('Scenario', [
    'name', 'preset', 'params', 'source', 'estimator', 'postprocess', 'n_bsteps',
    'mu', 'mu_policy', 'nu', 'n_cut', 'mode', 'axis', 'start', 'stop', 'step',
    'fluctuation', 'geometry', 'verify'])

FluctuationSpec = namedtuple('FluctuationSpec', ['n_total', 'u', 'log_failure', 'signal_fraction'])

VerifySpec = namedtuple('VerifySpec', ['n_pulses', 'sigma'])


def _as_str(value, lineno):
    if not value:
        raise ConfigError('empty value', lineno)
    return value


def _as_float(value, lineno):
    try:
        return float(value)
    except ValueError:
        raise ConfigError('expected a number, got "{}"'.format(value), lineno)


def _as_int(value, lineno):
    number = _as_float(value, lineno)
    if number != int(number):
        raise ConfigError('expected an integer, got "{}"'.format(value), lineno)
    return int(number)


def _intensity(value, lineno):
    number = _as_float(value, lineno)
    if not 0 < number <= 1:
        raise ConfigError('intensity must lie in (0, 1], got {}'.format(number), lineno)
    return number


def _nonnegative(value, lineno):
    number = _as_float(value, lineno)
    if number < 0:
        raise ConfigError('value must be nonnegative, got {}'.format(number), lineno)
    return number


def _positive_int(value, lineno):
    number = _as_int(value, lineno)
    if number < 1:
        raise ConfigError('value must be a positive integer, got {}'.format(number), lineno)
    return number


def _fraction_open(value, lineno):
    number = _as_float(value, lineno)
    if not 0 < number < 1:
        raise ConfigError('value must lie in (0, 1), got {}'.format(number), lineno)
    return number


def _log_failure(value, lineno):
    number = _as_float(value, lineno)
    if number > 0:
        raise ConfigError('log_failure must be nonpositive, got {}'.format(number), lineno)
    return number


def _choice(choices):
    def convert(value, lineno):
        if value not in choices:
            err_msg = 'invalid value "{}", expected one of {}'
            raise ConfigError(err_msg.format(value, ', '.join(choices)), lineno)
        return value
    return convert


def parse_f_ec(value, lineno=None):
    """
    Error-correction inefficiency: a constant, or `e1:f1, e2:f2, ...`.
    """
    if ':' not in value:
        return _as_float(value, lineno)
    table = []
    for item in value.split(','):
        parts = item.split(':')
        if len(parts) != 2:
            raise ConfigError('malformed f_ec entry "{}"'.format(item.strip()), lineno)
        table.append((_as_float(parts[0].strip(), lineno), _as_float(parts[1].strip(), lineno)))
    return tuple(table)


def _param_value(key, value, lineno):
    if key == 'f_ec':
        return parse_f_ec(value, lineno)
    return _as_float(value, lineno)


SCHEMA = {
    'scenario': {
        'name': _as_str,
        'preset': _choice(list_presets()),
        'source': _choice(SOURCE_KINDS),
        'estimator': _as_str,
        'postprocess': _choice(POSTPROCESS),
        'n_bsteps': _positive_int,
        'mu': _intensity,
        'mu_policy': _choice(MU_POLICIES),
        'nu': _intensity,
        'n_cut': _positive_int,
        'mode': _choice(MODES),
    },
    'params': {field: functools.partial(_param_value, field) for field in ExperimentParams._fields if field != 'name'},
    'sweep': {
        'axis': _choice(AXES),
        'start': _nonnegative,
        'stop': _nonnegative,
        'step': _as_float,
    },
    'fluctuation': {
        'n_total': _positive_int,
        'u': _nonnegative,
        'log_failure': _log_failure,
        'signal_fraction': _fraction_open,
    },
    'entanglement': {
        'geometry': _choice(ARM_GEOMETRIES),
    },
    'verify': {
        'n_pulses': _positive_int,
        'sigma': _nonnegative,
    },
}


def read_sections(text):
    """
    Split configuration text into sections of converted values.

    Returns:
        sections:  section -> key -> (value, line number)
                   (Type: dict[str, dict[str, tuple]])
    """
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue

        if line.startswith('['):
            if not line.endswith(']'):
                raise ConfigError('malformed section header "{}"'.format(line), lineno)
            current = line[1:-1].strip()
            if current not in SCHEMA:
                err_msg = 'unknown section [{}], expected one of {}'
                raise ConfigError(err_msg.format(current, ', '.join(sorted(SCHEMA))), lineno)
            if current in sections:
                raise ConfigError('duplicate section [{}]'.format(current), lineno)
            sections[current] = {}
            continue

        if '=' not in line:
            raise ConfigError('expected "key = value", got "{}"'.format(line), lineno)
        if current is None:
            raise ConfigError('key outside of any section', lineno)

        key, value = (part.strip() for part in line.split('=', 1))
        if key not in SCHEMA[current]:
            err_msg = 'unknown key "{}" in [{}]'
            raise ConfigError(err_msg.format(key, current), lineno)
        if key in sections[current]:
            raise ConfigError('duplicate key "{}"'.format(key), lineno)
        sections[current][key] = (SCHEMA[current][key](value, lineno), lineno)
    return sections


def _get(section, key, default=None):
    if key in section:
        return section[key][0]
    return default


def _line(section, key):
    if key in section:
        return section[key][1]
    return None


def parse_config(text, preset=None):
    """
    Parse and validate a scenario configuration.

    Args:
        text:  Configuration text
               (Type: str)

    Kwargs:
        preset:  Preset overriding the one named in the text
                 (Type: str or None)

    Returns:
        scenario:  Validated scenario
                   (Type: Scenario)
    """
    sections = read_sections(text)
    sc = sections.get('scenario', {})
    sweep = sections.get('sweep', {})
    params_section = sections.get('params', {})

    if preset is not None and preset not in list_presets():
        err_msg = 'unknown preset "{}", expected one of {}'
        raise ConfigError(err_msg.format(preset, ', '.join(list_presets())))
    preset = preset or _get(sc, 'preset', 'gys')
    overrides = {key: value for key, (value, _) in params_section.items()}
    try:
        params = get_preset(preset, **overrides)
    except ParameterError as exc:
        raise ConfigError('invalid [params]: {}'.format(exc))

    source = _get(sc, 'source', 'coherent')
    estimator = _get(sc, 'estimator', DEFAULT_ESTIMATOR[source])
    if estimator not in ESTIMATORS[source]:
        err_msg = 'estimator "{}" does not apply to a {} source, expected one of {}'
        raise ConfigError(err_msg.format(estimator, source, ', '.join(ESTIMATORS[source])),
                          _line(sc, 'estimator'))

    postprocess = _get(sc, 'postprocess', 'one_locc')
    n_bsteps = _get(sc, 'n_bsteps')
    if postprocess == 'bsteps':
        n_bsteps = 1 if n_bsteps is None else n_bsteps
    elif n_bsteps is not None:
        raise ConfigError('n_bsteps needs postprocess = bsteps', _line(sc, 'n_bsteps'))
    else:
        n_bsteps = 0
    if postprocess != 'one_locc' and source == 'pdc-pair':
        raise ConfigError('two-way post-processing is not available for triggered sources',
                          _line(sc, 'postprocess'))
    if postprocess == 'recurrence' and source == 'coherent' and estimator != 'infinite':
        raise ConfigError('recurrence needs the infinite decoy estimator',
                          _line(sc, 'postprocess'))

    mu = _get(sc, 'mu')
    mu_policy = _get(sc, 'mu_policy', 'optimized' if mu is None else 'fixed')
    if mu_policy == 'fixed' and mu is None:
        raise ConfigError('mu_policy = fixed needs a value for mu', _line(sc, 'mu_policy'))
    nu = _get(sc, 'nu', 0.1)
    if mu is not None and estimator in ('vacuum_weak', 'one_decoy', 'lp', 'trig_weak') and not nu < mu:
        raise ConfigError('nu must be smaller than mu, got nu={}, mu={}'.format(nu, mu),
                          _line(sc, 'nu'))
    mode = _get(sc, 'mode', 'closed')

    axis = _get(sweep, 'axis', PRESET_AXES[preset])
    start, stop, step = DEFAULT_SWEEPS[axis]
    start = _get(sweep, 'start', start)
    stop = _get(sweep, 'stop', stop)
    step = _get(sweep, 'step', step)
    if not step > 0:
        raise ConfigError('step must be positive, got {}'.format(step), _line(sweep, 'step'))

    fluctuation = None
    if 'fluctuation' in sections:
        fl = sections['fluctuation']
        if 'n_total' not in fl:
            raise ConfigError('[fluctuation] needs n_total')
        fluctuation = FluctuationSpec(n_total=_get(fl, 'n_total'), u=_get(fl, 'u', 10.0),
                                      log_failure=_get(fl, 'log_failure', 0.0),
                                      signal_fraction=_get(fl, 'signal_fraction', 0.5))
        _check_fluctuation(source, estimator, postprocess, axis, sc)

    ent = sections.get('entanglement', {})
    ver = sections.get('verify', {})
    scenario = Scenario(name=_get(sc, 'name', 'scenario'), preset=preset, params=params,
                        source=source, estimator=estimator, postprocess=postprocess,
                        n_bsteps=n_bsteps, mu=mu, mu_policy=mu_policy, nu=nu,
                        n_cut=_get(sc, 'n_cut'), mode=mode, axis=axis, start=start,
                        stop=stop, step=step, fluctuation=fluctuation,
                        geometry=_get(ent, 'geometry', 'middle'),
                        verify=VerifySpec(n_pulses=_get(ver, 'n_pulses', 10 ** 6),
                                          sigma=_get(ver, 'sigma', 5.0)))
    LOGGER.debug('Parsed scenario {}'.format(scenario.name))
    return scenario


def _check_fluctuation(source, estimator, postprocess, axis, sc):
    line = _line(sc, 'estimator')
    if source == 'coherent':
        if estimator not in ('vacuum_weak', 'one_decoy'):
            raise ConfigError('fluctuations need the vacuum_weak or one_decoy estimator', line)
        if postprocess != 'one_locc':
            raise ConfigError('fluctuations of two-way schemes are not modelled', line)
        if axis != 'km':
            raise ConfigError('coherent fluctuation sweeps run along km', line)
    elif source == 'pdc-pair':
        if estimator not in ('trig_infinite', 'trig_weak', 'ayki'):
            raise ConfigError('fluctuations need trig_infinite, trig_weak or ayki', line)
    elif postprocess == 'recurrence':
        raise ConfigError('fluctuations of the recurrence scheme are not modelled', line)


def load_config(path, preset=None):
    """
    Read and parse a configuration file.
    """
    try:
        with open(path, 'r') as f:
            text = f.read()
    except (IOError, OSError) as exc:
        raise ConfigError('cannot read config {}: {}'.format(path, exc))
    LOGGER.info('Loaded scenario config {}'.format(path))
    return parse_config(text, preset=preset)


def scenario_as_dict(scenario):
    """
    JSON-friendly view of a scenario.
    """
    d = scenario._asdict()
    d['params'] = scenario.params._asdict()
    d['fluctuation'] = scenario.fluctuation._asdict() if scenario.fluctuation else None
    d['verify'] = scenario.verify._asdict()
    return d
