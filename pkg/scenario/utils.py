import csv
import math
import sys
from multiprocessing import Pool

import numpy as np

from decoyqkd.errors import QKDError


class OutputError(QKDError, IOError):
    """
    A result table could not be written.
    """
    pass


def format_value(value):
    """
    Serialize one CSV cell: numbers with 9 significant digits, everything
    else as text. Booleans become 0/1 and missing values stay empty.
    """
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return '1' if value else '0'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        return '{:.9g}'.format(value)
    return str(value)


def format_table(columns, rows):
    """
    Render a table as CSV text with a header line and '\\n' line endings.

    Args:
        columns:  Column names
                  (Type: sequence[str])

        rows:     One dict per row, keyed by column name
                  (Type: sequence[dict])

    Returns:
        text:  CSV text
               (Type: str)
    """
    lines = [','.join(columns)]
    for row in rows:
        lines.append(','.join(format_value(row.get(col)) for col in columns))
    return '\n'.join(lines) + '\n'


def emit_csv(columns, rows, destination=None):
    """
    Write a table to a path, or to stdout when no destination is given.
    """
    text = format_table(columns, rows)
    if destination is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return None

    try:
        with open(destination, 'w', newline='') as f:
            f.write(text)
    except (IOError, OSError) as exc:
        raise OutputError('cannot write {}: {}'.format(destination, exc))
    return destination


def read_csv_as_dicts(path):
    items = []

    with open(path, 'r', newline='') as f:
        reader = csv.DictReader(f)
        for row in reader:
            items.append(row)

    return items


def map_iterate_in_parallel(iterable, function, processes=8):
    with Pool(processes=processes) as pool:
        output = pool.map(function, iterable)
    return list(output)
