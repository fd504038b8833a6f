import json
import logging
import os

import pytest

from log import LOGGER_NAMES, LogTimer, init_loggers
from qkdcli import parse_arguments
from scenario.report import all_rates_zero, summarize_table
from scenario.run import (ATTACK_COLUMNS, EXIT_INVALID, EXIT_NO_KEY, EXIT_OK, ROW_COLUMNS,
                          axis_values, run)
from scenario.utils import format_table, format_value, read_csv_as_dicts


@pytest.fixture(autouse=True)
def reset_loggers():
    yield
    for name in LOGGER_NAMES:
        logger = logging.getLogger(name)
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()


def _write(tmp_path, text, name='scenario.cfg'):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _csv_lines(capsys):
    return capsys.readouterr().out.strip().split('\n')


def test_parse_arguments():
    args = parse_arguments(['presets'])
    assert args == {'config': None, 'preset': None, 'out': None, 'seed': 0, 'cutoff': 0.0,
                    'jobs': 1, 'verbose': False, 'quiet': False, 'log_path': None,
                    'command': 'presets'}

    args = parse_arguments(['-c', 'a.cfg', '-j', '4', '-q', 'sweep'])
    assert (args['config'], args['jobs'], args['quiet'], args['command']) == ('a.cfg', 4, True, 'sweep')

    with pytest.raises(SystemExit):
        parse_arguments(['plot'])


def test_init_loggers_once(tmp_path):
    log_path = str(tmp_path / 'run.log')
    init_loggers(log_path=log_path)
    init_loggers(log_path=log_path)
    for name in LOGGER_NAMES:
        assert len(logging.getLogger(name).handlers) == 2


def test_log_timer(caplog):
    logger = logging.getLogger('scenario')
    with LogTimer(logger, 'Sweep of gys', log_level=logging.INFO) as timer:
        pass
    assert timer.duration >= 0.0
    assert 'Sweep of gys took' in caplog.text

    with pytest.raises(RuntimeError):
        with LogTimer(logger, 'Failed block') as timer:
            raise RuntimeError('boom')
    assert timer.duration is None
    assert 'Failed block' not in caplog.text

    with pytest.raises(ValueError):
        LogTimer(logger, 'x', log_level=logging.NOTSET)


def test_presets(tmp_path, capsys):
    code = run('presets', quiet=True, log_path=str(tmp_path / 'run.log'))
    assert code == EXIT_OK
    lines = _csv_lines(capsys)
    assert lines[0].startswith('name,axis,')
    assert [line.split(',')[:2] for line in lines[1:]] == [['gys', 'km'], ['pdc144', 'dB']]


def test_attack_table(tmp_path, capsys):
    assert run('attack', quiet=True, log_path=str(tmp_path / 'run.log')) == EXIT_OK
    lines = _csv_lines(capsys)
    assert lines[0] == ','.join(ATTACK_COLUMNS)
    assert len(lines) == 22
    assert lines[1].startswith('0,') and lines[-1].startswith('1,')


def test_out_directory(tmp_path):
    out = tmp_path / 'results'
    assert run('attack', out=str(out), quiet=True, log_path=str(tmp_path / 'run.log')) == EXIT_OK

    run_dirs = os.listdir(str(out / 'attack'))
    assert len(run_dirs) == 1
    run_dir = out / 'attack' / run_dirs[0]
    rows = read_csv_as_dicts(str(run_dir / 'attack.csv'))
    assert len(rows) == 21
    assert tuple(rows[0]) == ATTACK_COLUMNS
    assert rows[-1]['ratio'] == '1'

    config = json.loads((run_dir / 'config.json').read_text())
    assert config['command'] == 'attack'
    assert config['scenario'] is None
    assert config['csv_path'] == str(run_dir / 'attack.csv')


def test_rate(tmp_path, capsys):
    config = _write(tmp_path, '[scenario]\nname = gys-rate\nmu = 0.48\n[sweep]\nstart = 20\n')
    assert run('rate', config=config, quiet=True, log_path=str(tmp_path / 'run.log')) == EXIT_OK
    lines = _csv_lines(capsys)
    assert lines[0] == ','.join(ROW_COLUMNS)
    assert len(lines) == 2
    row = dict(zip(ROW_COLUMNS, lines[1].split(',')))
    assert float(row['axis']) == 20.0
    assert float(row['mu']) == 0.48
    assert float(row['rate']) > 0
    assert row['status'] == 'positive'


def test_nondecoy_runs_at_eta(tmp_path, capsys):
    config = _write(tmp_path, '[scenario]\nestimator = nondecoy\n[sweep]\nstart = 0\n')
    assert run('rate', config=config, quiet=True, log_path=str(tmp_path / 'run.log')) == EXIT_OK
    row = dict(zip(ROW_COLUMNS, _csv_lines(capsys)[1].split(',')))
    assert float(row['mu']) == pytest.approx(0.045)
    assert float(row['rate']) == pytest.approx(7.97e-5, rel=0.02)


PDC144_TEXT = ('[scenario]\npreset = pdc144\nsource = pdc-pair\nestimator = {}\n'
               '[sweep]\naxis = dB\nstart = {}\n')


def _pdc144_row(tmp_path, capsys, estimator, loss_db):
    config = _write(tmp_path, PDC144_TEXT.format(estimator, loss_db))
    assert run('rate', config=config, quiet=True, log_path=str(tmp_path / 'run.log')) == EXIT_OK
    return dict(zip(ROW_COLUMNS, _csv_lines(capsys)[1].split(',')))


# the reference curves put 0 dB at eta_bob * 10^(-0.05)
@pytest.mark.parametrize('estimator,mu,rate', [
    ('pnr', 1.0, 1.21e-2),
    ('trig_infinite', 0.52, 8.6e-3),
    ('ayki', 0.194, 4.2e-3),
    ('trig_nondecoy', 0.0589, 1.3e-3),
])
def test_pdc144_reference_rates(tmp_path, capsys, estimator, mu, rate):
    row = _pdc144_row(tmp_path, capsys, estimator, 0.5)
    assert float(row['mu']) == pytest.approx(mu, rel=0.05)
    assert float(row['rate']) == pytest.approx(rate, rel=0.03)


def test_pdc144_pnr_at_zero_loss(tmp_path, capsys):
    row = _pdc144_row(tmp_path, capsys, 'pnr', 0)
    assert float(row['rate']) == pytest.approx(1.3599e-2, rel=1e-3)
    assert float(row['rate']) / 1.21e-2 == pytest.approx(10 ** 0.05, rel=0.01)


def test_no_key(tmp_path, capsys):
    config = _write(tmp_path, '[scenario]\nmu = 0.48\n[sweep]\nstart = 300\nstop = 300\n')
    assert run('sweep', config=config, quiet=True, log_path=str(tmp_path / 'run.log')) == EXIT_NO_KEY
    lines = _csv_lines(capsys)
    assert len(lines) == 2
    assert lines[1].endswith(',0,clamped-zero')


def test_empty_sweep(tmp_path, capsys):
    config = _write(tmp_path, '[sweep]\nstart = 50\nstop = 10\n')
    assert run('sweep', config=config, quiet=True, log_path=str(tmp_path / 'run.log')) == EXIT_OK
    assert _csv_lines(capsys) == [','.join(ROW_COLUMNS)]


def test_invalid_input(tmp_path, capsys):
    log_path = str(tmp_path / 'run.log')
    config = _write(tmp_path, '[scenario]\nmu = -1\n')
    assert run('rate', config=config, quiet=True, log_path=log_path) == EXIT_INVALID
    assert run('rate', config=str(tmp_path / 'missing.cfg'), quiet=True,
               log_path=log_path) == EXIT_INVALID
    assert run('plot', quiet=True, log_path=log_path) == EXIT_INVALID
    assert run('attack', jobs=0, quiet=True, log_path=log_path) == EXIT_INVALID
    assert run('attack', cutoff=-1.0, quiet=True, log_path=log_path) == EXIT_INVALID
    assert capsys.readouterr().out == ''
    assert 'line 2: intensity must lie in (0, 1]' in open(log_path).read()


def test_axis_values():
    assert axis_values(0.0, 1.0, 0.25) == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert axis_values(0.0, 0.3, 0.1) == [0.0, 0.1, 0.2, 0.3]
    assert axis_values(5.0, 5.0, 1.0) == [5.0]
    assert axis_values(2.0, 1.0, 1.0) == []


@pytest.mark.parametrize('value,expected', [
    (None, ''),
    (True, '1'),
    (False, '0'),
    (3, '3'),
    (0.1, '0.1'),
    (1.0 / 3.0, '0.333333333'),
    (1.23456789e-7, '1.23456789e-07'),
    (float('nan'), 'nan'),
    ('B,P', 'B,P'),
])
def test_format_value(value, expected):
    assert format_value(value) == expected


def test_format_table():
    text = format_table(('a', 'b'), [{'a': 1, 'b': None}, {'a': 0.5, 'b': 'x'}])
    assert text == 'a,b\n1,\n0.5,x\n'


def test_summarize_table():
    rows = [{'axis': 0.0, 'mu': 0.5, 'rate': 1e-3, 'status': 'positive'},
            {'axis': 10.0, 'mu': 0.4, 'rate': 2e-3, 'status': 'positive'},
            {'axis': 20.0, 'mu': 0.3, 'rate': 0.0, 'status': 'clamped-zero'}]
    summary = summarize_table(rows)
    assert summary == {'points': 3, 'reach': 10.0, 'first_rate': 1e-3,
                       'best_rate': 2e-3, 'best_mu': 0.4}
    assert summarize_table([])['reach'] is None
    assert not all_rates_zero(rows)
    assert all_rates_zero(rows, cutoff=5e-3)
    assert all_rates_zero(rows[2:])
    assert not all_rates_zero([])
