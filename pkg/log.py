import time
import logging
import logging.handlers

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DEFAULT_LOG_PATH = './decoyqkd.log'

## Loggers configured by the command line entry point
LOGGER_NAMES = ('decoyqkd', 'scenario')


class LogTimer(object):
    """
    Context manager logging how long a sweep, a search or a simulation took.
    """

    def __init__(self, logger, desc, log_level=logging.DEBUG):
        """
        Creates a timer that logs '<desc> took <duration> seconds' on exit.

        Args:
            logger:     Logger to log to
                        (Type: logging.Logger)

            desc:       Description of the timed block, e.g. 'Sweep of gys-vw'
                        (Type: str)

        Kwargs:
            log_level:  Level of the timing message, DEBUG by default
                        (Type: int)
        """
        if log_level == logging.NOTSET:
            raise ValueError('Cannot use NOTSET logging level.')

        ## Logger used to log timing information
        ## (Type: logging.Logger)
        self.logger = logger
        ## Level of the timing message
        ## (Type: int)
        self.log_level = log_level
        ## Description of the timed block
        ## (Type: str)
        self.desc = desc
        ## Duration of the last completed block, None until one completes
        ## (Type: float or None)
        self.duration = None
        self._start_time = None

    def __enter__(self):
        self._start_time = time.time()
        return self

    def __exit__(self, type_, value, tb):
        """
        Log the duration of the block. Nothing is logged when it raised.
        """
        duration = time.time() - self._start_time
        self._start_time = None

        if type_ or value or tb:
            return

        self.duration = duration
        self.logger.log(self.log_level, "{0} took {1:.3f} seconds".format(self.desc, duration))


def init_file_logger(logger, log_path=None):
    """
    Log to a file rotated once it reaches 1MiB, "decoyqkd.log" in the
    current directory unless a path is given.

    Args:
        logger:  Logger object
                 (Type: logging.Logger)

    Kwargs:
        log_path:  Path of the log file
                   (Type: str or None)
    """
    handler = logging.handlers.RotatingFileHandler(log_path or DEFAULT_LOG_PATH, maxBytes=2**20)
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(handler)


def init_console_logger(logger, verbose=False, quiet=False):
    """
    Log to stderr; stdout stays free for CSV output.

    Args:
        logger:  Logger object
                 (Type: logging.Logger)

    Kwargs:
        verbose:  Show DEBUG messages (solver brackets, LP status)
                  (Type: bool)

        quiet:    Show warnings and errors only
                  (Type: bool)
    """
    stream_handler = logging.StreamHandler()
    if verbose:
        stream_handler.setLevel(logging.DEBUG)
    elif quiet:
        stream_handler.setLevel(logging.WARNING)
    else:
        stream_handler.setLevel(logging.INFO)
    stream_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(stream_handler)


def init_loggers(verbose=False, quiet=False, log_path=None):
    """
    Attach console and file handlers to the library and scenario loggers.
    """
    for name in LOGGER_NAMES:
        logger = logging.getLogger(name)
        if logger.handlers:
            continue
        init_console_logger(logger, verbose=verbose, quiet=quiet)
        init_file_logger(logger, log_path=log_path)
