import logging
import math

LOGGER = logging.getLogger('scenario')
LOGGER.setLevel(logging.DEBUG)


def summarize_table(rows, cutoff=0.0):
    """
    Headline figures of a sweep table.

    Args:
        rows:  Rows sorted by axis value, with keys axis, mu and rate
               (Type: list[dict])

    Returns:
        summary:  points, reach (last axis value with a rate above the cutoff,
                  None if there is none), first_rate, best_rate and best_mu
                  (Type: dict[str, *])
    """
    summary = {'points': len(rows), 'reach': None, 'first_rate': None,
               'best_rate': None, 'best_mu': None}
    if not rows:
        return summary

    summary['first_rate'] = rows[0]['rate']
    best = max(rows, key=lambda row: row['rate'])
    summary['best_rate'] = best['rate']
    summary['best_mu'] = best['mu']

    positive = [row['axis'] for row in rows if row['rate'] > cutoff]
    if positive:
        summary['reach'] = max(positive)
    return summary


def all_rates_zero(rows, cutoff=0.0):
    """
    Whether a sweep produced no key above the cutoff anywhere (an empty table
    does not count).
    """
    return bool(rows) and all(row['rate'] <= cutoff or row['status'] != 'positive' for row in rows)


def _fmt(value):
    if value is None:
        return 'n/a'
    if isinstance(value, float) and not math.isnan(value):
        return '{:.6g}'.format(value)
    return str(value)


def print_table_summary(rows, name, axis, cutoff=0.0):
    """
    Log the reach, the rate at the first point and the intensity of the best point.
    """
    summary = summarize_table(rows, cutoff=cutoff)
    LOGGER.info("Results summary for {}".format(name))
    LOGGER.info("=====================================================")
    LOGGER.info("* sweep")
    LOGGER.info("\t- points: {}".format(summary['points']))
    LOGGER.info("\t- reach: {} {}".format(_fmt(summary['reach']), axis))
    LOGGER.info("* rate")
    LOGGER.info("\t- first point: {}".format(_fmt(summary['first_rate'])))
    LOGGER.info("\t- best: {}".format(_fmt(summary['best_rate'])))
    LOGGER.info("\t- mu at best: {}".format(_fmt(summary['best_mu'])))
    return summary
