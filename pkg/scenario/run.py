import datetime
import functools
import getpass
import json
import logging
import os

import git
import numpy as np
import scipy
from tqdm import tqdm

from decoyqkd.core_model import ec_inefficiency
from decoyqkd.errors import ConfigError, QKDError
from decoyqkd.fluctuation import flucsim_report, make_confidence, optimize_allocation
from decoyqkd.keyrate import distance_upper_bound, timeshift_table
from decoyqkd.mc_oracle import verify_suite
from decoyqkd.optimize import (REGIMES, max_reach, optimal_lambda_entanglement,
                               optimal_mu_coherent, optimal_mu_triggering)
from decoyqkd.presets import PRESET_AXES, get_preset, list_presets
from decoyqkd.twoway import MAX_STEPS, gl_region_map
from log import LogTimer, init_loggers
from scenario.config import DEFAULT_SWEEPS, VerifySpec, load_config, parse_config, scenario_as_dict
from scenario.pipelines import (ROW_COLUMNS, channel_eta, choose_intensity, evaluate_point,
                                make_rate_fn)
from scenario.report import all_rates_zero, print_table_summary
from scenario.utils import emit_csv, map_iterate_in_parallel

LOGGER = logging.getLogger('scenario')
LOGGER.setLevel(logging.DEBUG)

COMMANDS = ('rate', 'sweep', 'optimize', 'region', 'attack', 'verify', 'presets')

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NO_KEY = 2

QUANTITY_COLUMNS = ('quantity', 'value')
REGION_COLUMNS = ('delta_b', 'delta_p', 'tolerable', 'sequence')
ATTACK_COLUMNS = ('ratio', 'eve_info', 'mismatch_rate')
VERIFY_COLUMNS = ('label', 'z_gain', 'z_error', 'flagged')

## Efficiency ratios eta1/eta0 tabulated by the attack command
ATTACK_RATIOS = tuple(round(0.05 * k, 2) for k in range(21))


def axis_values(start, stop, step):
    """
    Points start, start + step, ... up to stop inclusive; empty when stop < start.
    """
    if stop < start:
        return []
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [float(x) for x in np.round(start + step * np.arange(n), 12)]


def run_scenario(scenario, jobs=1, quiet=False):
    """
    Evaluate a scenario along its sweep axis.

    Args:
        scenario:  Validated scenario
                   (Type: Scenario)

    Kwargs:
        jobs:   Number of worker processes
                (Type: int)

        quiet:  Hide the progress bar
                (Type: bool)

    Returns:
        rows:  One row per axis value, sorted by axis value
               (Type: list[dict])
    """
    if scenario.axis == 'delta':
        raise ConfigError('the delta axis is only swept by the region command')
    xs = axis_values(scenario.start, scenario.stop, scenario.step)
    LOGGER.info('Sweeping {} over {} points along {}'.format(scenario.name, len(xs), scenario.axis))

    evaluate = functools.partial(evaluate_point, scenario)
    with LogTimer(LOGGER, 'Sweep of {}'.format(scenario.name), log_level=logging.INFO):
        if jobs > 1 and len(xs) > 1:
            rows = map_iterate_in_parallel(xs, evaluate, processes=jobs)
        else:
            rows = [evaluate(x) for x in tqdm(xs, desc=scenario.name, disable=quiet)]

    rows.sort(key=lambda row: row['axis'])
    return rows


def run_rate(scenario):
    """
    Single point at the start of the sweep range.
    """
    return [evaluate_point(scenario, scenario.start)]


def _closed_optima(scenario):
    params = scenario.params
    f = ec_inefficiency(params, params.e_detector)
    if scenario.source == 'coherent':
        eta = channel_eta(scenario, scenario.start)
        return [('mu_decoy_closed', optimal_mu_coherent(params, eta, decoy=True)),
                ('mu_nondecoy_closed', optimal_mu_coherent(params, eta, decoy=False))]
    if scenario.source == 'pdc-pair':
        return [('mu_decoy_closed', optimal_mu_triggering(params.e_detector, f, decoy=True)),
                ('x_nondecoy_closed', optimal_mu_triggering(params.e_detector, f, decoy=False))]
    return [('lambda_{}'.format(regime), optimal_lambda_entanglement(params.e_detector, f, regime))
            for regime in REGIMES]


def _allocation(scenario, mu):
    spec = scenario.fluctuation
    params = scenario.params
    conf = make_confidence(spec.u, spec.log_failure)
    allocation = optimize_allocation(params, spec.n_total, scenario.start, conf, mu=mu,
                                     vacuum=scenario.estimator == 'vacuum_weak')
    report = flucsim_report(params, allocation.budget, mu, allocation.nu, scenario.start, conf)
    return [('n_signal', allocation.budget.n_signal),
            ('n_vacuum', allocation.budget.n_vacuum),
            ('n_weak', allocation.budget.n_weak),
            ('nu', allocation.nu),
            ('beta_y0', report.beta_y0),
            ('beta_y1', report.beta_y1),
            ('beta_e1', report.beta_e1),
            ('beta_rate', report.beta_r),
            ('final_key', report.final_key)]


def run_optimize(scenario, cutoff=0.0):
    """
    Optimal intensities and reach of a scenario.

    Returns the closed-condition optima for the source, the numeric optimum
    of the configured scenario at the start of the sweep, the reach along the
    axis and, for fluctuation scenarios with a coherent source, the pulse
    allocation.

    Returns:
        rows:  (quantity, value) rows
               (Type: list[dict])
    """
    if scenario.axis == 'delta':
        raise ConfigError('the delta axis is only swept by the region command')

    try:
        quantities = _closed_optima(scenario)
        row = evaluate_point(scenario, scenario.start)
        quantities += [('mu_numeric', row['mu']), ('rate_at_start', row['rate'])]

        def rate_at(x):
            return choose_intensity(scenario, x, make_rate_fn(scenario, x))[1].result

        with LogTimer(LOGGER, 'Reach search of {}'.format(scenario.name), log_level=logging.INFO):
            reach = max_reach(rate_at, axis=scenario.axis, rate_cutoff=cutoff,
                              start=scenario.start)
        quantities += [('reach', reach.reach), ('reach_flagged', reach.flagged)]

        if scenario.source == 'coherent' and scenario.axis == 'km':
            quantities.append(('distance_upper_bound', distance_upper_bound(scenario.params)))
        if scenario.source == 'coherent' and scenario.fluctuation is not None:
            quantities += _allocation(scenario, row['mu'])
    except QKDError as exc:
        err_msg = 'scenario {}: {}'
        raise type(exc)(err_msg.format(scenario.name, exc)) from exc

    return [{'quantity': name, 'value': value} for name, value in quantities]


def run_region(scenario=None, max_steps=MAX_STEPS):
    """
    Tolerable (delta_b, delta_p) region of B/P step sequences on a square grid.

    The grid comes from the [sweep] section when its axis is 'delta' and
    spans 0 to 0.3 in steps of 0.01 otherwise.
    """
    if scenario is not None and scenario.axis == 'delta':
        start, stop, step = scenario.start, scenario.stop, scenario.step
    else:
        start, stop, step = DEFAULT_SWEEPS['delta']
    deltas = np.array(axis_values(start, stop, step))
    deltas_b, deltas_p = np.meshgrid(deltas, deltas, indexing='ij')

    with LogTimer(LOGGER, 'Region map on {} points'.format(deltas_b.size), log_level=logging.INFO):
        tolerable, sequences = gl_region_map(deltas_b, deltas_p, max_steps=max_steps)

    rows = []
    for idx in np.ndindex(deltas_b.shape):
        sequence = sequences[idx]
        if sequence == '':
            sequence = 'hashing'
        rows.append({'delta_b': float(deltas_b[idx]), 'delta_p': float(deltas_p[idx]),
                     'tolerable': bool(tolerable[idx]), 'sequence': sequence})
    LOGGER.info('{} of {} grid points tolerable'.format(int(tolerable.sum()), tolerable.size))
    return rows


def run_attack(ratios=ATTACK_RATIOS):
    return timeshift_table(ratios)


def run_verify(spec=None, e_d=None, seed=0, jobs=1):
    """
    Monte Carlo agreement suite against the analytic observables.
    """
    spec = spec or VerifySpec(n_pulses=10 ** 6, sigma=5.0)
    kwargs = {} if e_d is None else {'e_d': e_d}
    with LogTimer(LOGGER, 'Verification suite', log_level=logging.INFO):
        reports = verify_suite(n_pulses=spec.n_pulses, seed=seed, jobs=jobs,
                               sigma=spec.sigma, **kwargs)
    return [report._asdict() for report in reports]


def run_presets():
    """
    One row per registered preset with all of its parameters.
    """
    rows = []
    for name in list_presets():
        row = get_preset(name)._asdict()
        row['axis'] = PRESET_AXES[name]
        if not isinstance(row['f_ec'], float):
            row['f_ec'] = ' '.join('{}:{}'.format(e, f) for e, f in row['f_ec'])
        rows.append(row)
    columns = ('name', 'axis') + tuple(key for key in rows[0] if key not in ('name', 'axis'))
    return columns, rows


def git_commit():
    """
    Commit of the working tree, None outside of a git repository.
    """
    try:
        repo = git.Repo(os.path.dirname(os.path.abspath(__file__)),
                        search_parent_directories=True)
        return repo.head.object.hexsha
    except (git.InvalidGitRepositoryError, git.NoSuchPathError, ValueError):
        return None


def save_run(out, command, name, columns, rows, scenario=None, seed=0, cutoff=0.0, jobs=1):
    """
    Write the result table and the run configuration into
    <out>/<name>/<timestamp>/.

    Returns:
        csv_path:  Path of the written table
                   (Type: str)
    """
    run_dir = os.path.join(out, name, datetime.datetime.now().strftime("%Y%m%d%H%M%S"))
    if not os.path.isdir(run_dir):
        os.makedirs(run_dir)

    csv_path = os.path.join(run_dir, '{}.csv'.format(command))
    emit_csv(columns, rows, csv_path)
    LOGGER.info('Saved results to {}'.format(csv_path))

    config = {
        'command': command,
        'scenario': scenario_as_dict(scenario) if scenario is not None else None,
        'seed': seed,
        'cutoff': cutoff,
        'jobs': jobs,
        'username': getpass.getuser(),
        'git_commit': git_commit(),
        'numpy_version': np.__version__,
        'scipy_version': scipy.__version__,
        'csv_path': csv_path,
    }
    config_path = os.path.join(run_dir, 'config.json')
    with open(config_path, 'w') as fp:
        json.dump(config, fp, indent=2)
    LOGGER.info('Saved configurations to {}'.format(config_path))
    return csv_path


def _execute(command, scenario, seed, cutoff, jobs, quiet):
    if command == 'presets':
        columns, rows = run_presets()
        return columns, rows, EXIT_OK
    if command == 'attack':
        return ATTACK_COLUMNS, run_attack(), EXIT_OK
    if command == 'region':
        return REGION_COLUMNS, run_region(scenario), EXIT_OK
    if command == 'verify':
        spec = scenario.verify if scenario is not None else None
        e_d = scenario.params.e_detector if scenario is not None else None
        rows = run_verify(spec, e_d=e_d, seed=seed, jobs=jobs)
        flagged = [row['label'] for row in rows if row['flagged']]
        if flagged:
            LOGGER.warning('Monte Carlo disagrees with the model on {}'.format(', '.join(flagged)))
        return VERIFY_COLUMNS, rows, EXIT_NO_KEY if flagged else EXIT_OK

    if scenario is None:
        scenario = parse_config('')
    if command == 'optimize':
        rows = run_optimize(scenario, cutoff=cutoff)
        values = {row['quantity']: row['value'] for row in rows}
        return QUANTITY_COLUMNS, rows, EXIT_OK if values['rate_at_start'] > cutoff else EXIT_NO_KEY

    rows = run_rate(scenario) if command == 'rate' else run_scenario(scenario, jobs=jobs, quiet=quiet)
    if command == 'sweep':
        print_table_summary(rows, scenario.name, scenario.axis, cutoff=cutoff)
    if all_rates_zero(rows, cutoff=cutoff):
        LOGGER.warning('No key above {} anywhere in {}'.format(cutoff, scenario.name))
        return ROW_COLUMNS, rows, EXIT_NO_KEY
    return ROW_COLUMNS, rows, EXIT_OK


def run(command, config=None, preset=None, out=None, seed=0, cutoff=0.0, jobs=1,
        verbose=False, quiet=False, log_path=None):
    """
    Run one command of the scenario runner and return its exit code.

    Args:
        command:  One of COMMANDS
                  (Type: str)

    Kwargs:
        config:    Scenario configuration file
                   (Type: str or None)

        preset:    Preset overriding the configured one
                   (Type: str or None)

        out:       Output directory; the table goes to stdout when omitted
                   (Type: str or None)

        seed:      Monte Carlo seed
                   (Type: int)

        cutoff:    Rates at or below this count as no key
                   (Type: float)

        jobs:      Worker processes for sweeps and simulations
                   (Type: int)

        verbose:   Log debug messages to the console
                   (Type: bool)

        quiet:     Log warnings only and hide progress bars
                   (Type: bool)

        log_path:  Log file path
                   (Type: str or None)

    Returns:
        code:  0 on success, 1 on invalid input, 2 when no key is produced
               or the Monte Carlo check disagrees
               (Type: int)
    """
    init_loggers(verbose=verbose, quiet=quiet, log_path=log_path)
    try:
        if command not in COMMANDS:
            err_msg = 'Unknown command "{}", expected one of {}'
            raise ConfigError(err_msg.format(command, ', '.join(COMMANDS)))
        if jobs < 1:
            raise ConfigError('jobs must be at least 1, got {}'.format(jobs))
        if cutoff < 0:
            raise ConfigError('cutoff must be nonnegative, got {}'.format(cutoff))

        scenario = None
        if config is not None:
            scenario = load_config(config, preset=preset)
        elif preset is not None:
            scenario = parse_config('', preset=preset)

        columns, rows, code = _execute(command, scenario, seed, cutoff, jobs, quiet)
        if out is None:
            emit_csv(columns, rows)
        else:
            name = scenario.name if scenario is not None else command
            save_run(out, command, name, columns, rows, scenario=scenario, seed=seed,
                     cutoff=cutoff, jobs=jobs)
    except QKDError as exc:
        LOGGER.error(str(exc))
        return EXIT_INVALID
    return code
