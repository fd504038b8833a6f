import argparse
import sys

from scenario.run import COMMANDS, run


def parse_arguments(argv=None):
    """
    Parse arguments from the command line


    Returns:
        args:  Argument dictionary
               (Type: dict[str, *])
    """
    parser = argparse.ArgumentParser(description='Decoy-state QKD key rate scenarios: rates, sweeps, optimal intensities, two-way regions and Monte Carlo checks')

    parser.add_argument('-c',
                        '--config',
                        dest='config',
                        action='store',
                        type=str,
                        default=None,
                        help='Path to a scenario configuration file')

    parser.add_argument('-p',
                        '--preset',
                        dest='preset',
                        action='store',
                        type=str,
                        default=None,
                        help='Preset overriding the one named in the configuration')

    parser.add_argument('-o',
                        '--out',
                        dest='out',
                        action='store',
                        type=str,
                        default=None,
                        help='Directory where a timestamped run directory is created. If omitted, the table is written to stdout')

    parser.add_argument('-s',
                        '--seed',
                        dest='seed',
                        action='store',
                        type=int,
                        default=0,
                        help='Seed of the Monte Carlo simulation')

    parser.add_argument('-co',
                        '--cutoff',
                        dest='cutoff',
                        action='store',
                        type=float,
                        default=0.0,
                        help='Key rates at or below this value count as no key')

    parser.add_argument('-j',
                        '--jobs',
                        dest='jobs',
                        action='store',
                        type=int,
                        default=1,
                        help='Number of worker processes for sweeps and simulations')

    parser.add_argument('-v',
                        '--verbose',
                        dest='verbose',
                        action='store_true',
                        help='If set, log debug messages to the console')

    parser.add_argument('-q',
                        '--quiet',
                        dest='quiet',
                        action='store_true',
                        help='If set, log warnings only and hide progress bars')

    parser.add_argument('-lp',
                        '--log-path',
                        dest='log_path',
                        action='store',
                        type=str,
                        default=None,
                        help='Path to the log file, ./decoyqkd.log by default')

    parser.add_argument('command',
                        action='store',
                        type=str,
                        choices=COMMANDS,
                        help='Command to run')

    return vars(parser.parse_args(argv))

if __name__ == '__main__':
    args = parse_arguments()
    sys.exit(run(**args))
