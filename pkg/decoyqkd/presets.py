"""
Named experimental setups used throughout the scenarios and tests.

gys is the fiber setup at 1550 nm (distance axis in km, coherent source).
pdc144 is the 144 km free-space PDC link (channel loss axis in dB); beta is
zero there because scenarios address it by total loss, never by distance.
"""
from .core_model import make_params
from .errors import ParameterError


PRESETS = {
    'gys': dict(
        name='gys',
        wavelength=1550.0,
        beta=0.21,
        eta_bob=0.045,
        eta_alice=1.0,
        e_detector=0.033,
        y0=1.7e-6,
        y0_alice=0.0,
        q_basis=0.5,
        f_ec=1.22,
        rep_rate=2e6,
    ),
    'pdc144': dict(
        name='pdc144',
        wavelength=710.0,
        beta=0.0,
        eta_bob=0.145,
        eta_alice=0.145,
        e_detector=0.015,
        y0=6.024e-6,
        y0_alice=6.024e-6,
        q_basis=0.5,
        f_ec=1.22,
        rep_rate=249e6,
    ),
}

## Axis each preset is swept along by default
PRESET_AXES = {
    'gys': 'km',
    'pdc144': 'dB',
}


def list_presets():
    return sorted(PRESETS)


def get_preset(name, **overrides):
    """
    Look up a preset by name, optionally overriding some of its fields.

    Args:
        name:  Preset name
               (Type: str)

    Kwargs:
        Any ExperimentParams field

    Returns:
        params:  Validated parameters
                 (Type: ExperimentParams)
    """
    if name not in PRESETS:
        err_msg = 'Unknown preset "{}", expected one of {}'
        raise ParameterError(err_msg.format(name, ', '.join(list_presets())))

    fields = dict(PRESETS[name])
    fields.update(overrides)
    return make_params(**fields)
