import logging
import math
from collections import namedtuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import xlogy

from .core_model import ec_inefficiency
from .errors import NoSolutionError, ParameterError
from .keyrate import KeyRateResult, binary_entropy, koashi_preskill_rate
from .pdc_model import ent_observables

LOGGER = logging.getLogger('decoyqkd')
LOGGER.setLevel(logging.DEBUG)

INV_PHI = (math.sqrt(5) - 1) / 2  # 1 / phi
INV_PHI_SQUARE = (3 - math.sqrt(5)) / 2  # 1 / phi^2

## Root bracket shared by every intensity condition
MU_BRACKET = (1e-6, 1.0)
ROOT_XTOL = 1e-10
ROOT_MAXITER = 200

REGIMES = ('eta_a~1', 'eta_a<<1')

ReachResult = namedtuple('ReachResult', ['reach', 'flagged'])


def _value(result):
    if isinstance(result, KeyRateResult):
        return result.raw
    return float(result)


def golden_section(fn, lo, hi, tol=1e-6):
    """
    Golden-section maximization of a unimodal function on [lo, hi].

    The endpoints are compared with the interior optimum and ties go to the
    leftmost point.

    Args:
        fn:   Function of one float returning a float
              (Type: callable)

        lo:   Left end of the bracket
              (Type: float)

        hi:   Right end of the bracket
              (Type: float)

    Kwargs:
        tol:  Width of the final interval
              (Type: float)

    Returns:
        x:      Maximizer
                (Type: float)

        value:  fn(x)
                (Type: float)
    """
    a, b = min(lo, hi), max(lo, hi)
    f_lo = fn(a)
    h = b - a
    if h <= tol:
        return a, f_lo

    # steps needed to reach the tolerance
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))

    c = a + INV_PHI_SQUARE * h
    d = a + INV_PHI * h
    yc = fn(c)
    yd = fn(d)

    for _ in range(n - 1):
        if yc >= yd:
            b = d
            d = c
            yd = yc
            h = INV_PHI * h
            c = a + INV_PHI_SQUARE * h
            yc = fn(c)
        else:
            a = c
            c = d
            yc = yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = fn(d)

    best_x, best_y = (c, yc) if yc >= yd else (d, yd)
    LOGGER.debug('Golden section ended on [{:.8g}, {:.8g}]'.format(a, b))

    if f_lo >= best_y:
        return min(lo, hi), f_lo
    f_hi = fn(max(lo, hi))
    if f_hi > best_y:
        return max(lo, hi), f_hi
    return best_x, best_y


def maximize_scalar(fn, bracket=MU_BRACKET, tol=1e-6, n_grid=40):
    """
    Maximize a scenario rate function over one intensity.

    A grid (log-spaced on positive brackets) locates the best cell and a
    golden-section search refines inside it. Key rates are compared by their
    unclamped value so the search can follow the rate below zero.

    Args:
        fn:  Maps an intensity to a KeyRateResult (or a float)
             (Type: callable)

    Kwargs:
        bracket:  Search interval
                  (Type: tuple[float, float])

        tol:      Absolute tolerance on the argument
                  (Type: float)

        n_grid:   Number of prescan points
                  (Type: int)

    Returns:
        x:       Maximizer, leftmost on plateaus
                 (Type: float)

        result:  fn(x)
                 (Type: KeyRateResult or float)
    """
    lo, hi = bracket
    if not lo < hi:
        raise ParameterError('empty bracket {}'.format(bracket))

    if lo > 0:
        grid = np.geomspace(lo, hi, n_grid)
    else:
        grid = np.linspace(lo, hi, n_grid)
    values = [_value(fn(x)) for x in grid]
    k = int(np.argmax(values))

    left = grid[max(k - 1, 0)]
    right = grid[min(k + 1, n_grid - 1)]
    x, value = golden_section(lambda t: _value(fn(t)), left, right, tol=tol)
    if values[k] >= value:
        x = grid[k]
    return float(x), fn(x)


def _root(fn, lo, hi, what):
    f_lo = fn(lo)
    f_hi = fn(hi)
    if f_hi == 0:
        return hi
    if f_lo == 0:
        return lo
    if np.sign(f_lo) == np.sign(f_hi):
        err_msg = 'No {} on [{}, {}]: the condition does not change sign'
        raise NoSolutionError(err_msg.format(what, lo, hi))
    LOGGER.debug('Solving {} on [{}, {}]'.format(what, lo, hi))
    return float(brentq(fn, lo, hi, xtol=ROOT_XTOL, maxiter=ROOT_MAXITER))


def _decoy_ratio(e_d, f):
    if not 0 <= e_d < 0.5:
        raise ParameterError('e_d must lie in [0, 1/2), got {}'.format(e_d))
    h = binary_entropy(e_d)
    ratio = f * h / (1.0 - h)
    if ratio >= 1:
        err_msg = 'e_d = {} is too large: f H2(e_d) / (1 - H2(e_d)) = {:.4g} >= 1'
        raise NoSolutionError(err_msg.format(e_d, ratio))
    return ratio


def optimal_mu_coherent(params, eta, decoy=True):
    """
    Optimal signal intensity of a coherent source.

    With decoys the optimum solves (1 - mu) exp(-mu) = f H2(e_d) / (1 - H2(e_d)).
    Without decoys it solves mu exp(-mu) = eta exp(-eta mu), close to mu = eta.
    """
    if not 0 < eta < 1:
        raise ParameterError('eta must lie in (0, 1), got {}'.format(eta))
    f = ec_inefficiency(params, params.e_detector)

    if decoy:
        ratio = _decoy_ratio(params.e_detector, f)
        return _root(lambda mu: (1.0 - mu) * np.exp(-mu) - ratio,
                     MU_BRACKET[0], MU_BRACKET[1], 'decoy optimum')
    # the root sits near eta, which may fall below the shared bracket
    return _root(lambda mu: eta * np.exp(-eta * mu) - mu * np.exp(-mu),
                 min(MU_BRACKET[0], 1e-3 * eta), MU_BRACKET[1], 'non-decoy optimum')


def optimal_mu_triggering(e_d, f, decoy=True):
    """
    Optimal intensity of a triggered PDC source.

    With decoys returns mu solving (1 - mu)/(1 + mu)^3 = f H2(e_d)/(1 - H2(e_d)).
    Without decoys returns x = mu / eta solving

        1 - f H2(e_d) - 2x + e_d log2(e_d/(1-x)) + (1-e_d-2x) log2(1 - e_d/(1-x)) = 0

    on (0, 1/2].
    """
    if decoy:
        ratio = _decoy_ratio(e_d, f)
        return _root(lambda mu: (1.0 - mu) / (1.0 + mu) ** 3 - ratio,
                     MU_BRACKET[0], MU_BRACKET[1], 'triggered decoy optimum')

    if not 0 <= e_d < 0.5:
        raise ParameterError('e_d must lie in [0, 1/2), got {}'.format(e_d))
    cost = f * binary_entropy(e_d)

    def condition(x):
        ratio = e_d / (1.0 - x)
        return (1.0 - cost - 2.0 * x + xlogy(e_d, ratio) / np.log(2.0)
                + (1.0 - e_d - 2.0 * x) * np.log2(1.0 - ratio))

    return _root(condition, MU_BRACKET[0], 0.5, 'triggered non-decoy optimum')


def _entanglement_condition(e_d, f, regime):
    if regime == 'eta_a~1':
        def condition(lam):
            e = (2.0 * e_d + lam) / (2.0 + 2.0 * lam)
            return (1.0 - (1.0 + f) * binary_entropy(e)
                    - lam * (1.0 + f) * (1.0 - 2.0 * e_d) / (2.0 * (1.0 + lam) ** 2)
                    * np.log2((1.0 - e) / e))
    elif regime == 'eta_a<<1':
        def condition(lam):
            e = (e_d + lam + e_d * lam) / (1.0 + 3.0 * lam)
            return ((1.0 + 6.0 * lam) * (1.0 - (1.0 + f) * binary_entropy(e))
                    - lam * (1.0 + f) * (1.0 - 2.0 * e_d) / (1.0 + 3.0 * lam)
                    * np.log2((1.0 - e) / e))
    else:
        err_msg = 'Unknown regime "{}", expected one of {}'
        raise ParameterError(err_msg.format(regime, ', '.join(REGIMES)))
    return condition


def optimal_lambda_entanglement(e_d, f, regime='eta_a~1'):
    """
    Optimal pair number lambda of an entangled source in one of the two
    efficiency regimes of Alice's arm.
    """
    if not 0 <= e_d < 0.5:
        raise ParameterError('e_d must lie in [0, 1/2), got {}'.format(e_d))
    condition = _entanglement_condition(e_d, f, regime)
    return _root(condition, MU_BRACKET[0], MU_BRACKET[1],
                 'entanglement optimum ({})'.format(regime))


def optimal_mu_entanglement_numeric(params, eta_a, eta_b, epsilon=0.0):
    """
    Numerically maximize the entanglement key rate over lambda.

    Returns:
        lam:     Optimal lambda
                 (Type: float)

        result:  Key rate at lam
                 (Type: KeyRateResult)
    """
    def rate(lam):
        return koashi_preskill_rate(params, ent_observables(params, lam, eta_a, eta_b),
                                    epsilon=epsilon)

    return maximize_scalar(rate)


def max_reach(rate_at, axis='km', rate_cutoff=0.0, start=0.0, stop=None,
              resolution=0.01):
    """
    Largest axis value whose key rate exceeds the cutoff.

    A coarse scan (1 km or 0.5 dB) brackets the last positive point, then
    bisection narrows the edge to the given resolution.

    Args:
        rate_at:  Maps an axis value to a KeyRateResult; intensity optimization,
                  when wanted, happens inside it
                  (Type: callable)

    Kwargs:
        axis:         'km' or 'dB'
                      (Type: str)

        rate_cutoff:  Rates at or below this count as zero
                      (Type: float)

        start:        First axis value scanned
                      (Type: float)

        stop:         Last axis value scanned (400 km or 100 dB by default)
                      (Type: float)

        resolution:   Final bracket width
                      (Type: float)

    Returns:
        result:  Reach, flagged when the rate is nowhere above the cutoff or
                 still above it at the end of the scan
                 (Type: ReachResult)
    """
    if axis == 'km':
        step = 1.0
        stop = 400.0 if stop is None else stop
    elif axis == 'dB':
        step = 0.5
        stop = 100.0 if stop is None else stop
    else:
        raise ParameterError('Unknown axis "{}", expected km or dB'.format(axis))

    def secure(x):
        return rate_at(x).rate > rate_cutoff

    grid = np.arange(start, stop + step / 2.0, step)
    last = None
    for idx, x in enumerate(grid):
        if secure(x):
            last = idx
        elif last is not None:
            break

    if last is None:
        LOGGER.warning('Rate never exceeds {} on [{}, {}] {}'.format(rate_cutoff, start, stop, axis))
        return ReachResult(reach=0.0, flagged=True)
    if last == len(grid) - 1:
        LOGGER.warning('Rate still positive at the end of the scan ({} {})'.format(stop, axis))
        return ReachResult(reach=float(grid[last]), flagged=True)

    lo, hi = grid[last], grid[last + 1]
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if secure(mid):
            lo = mid
        else:
            hi = mid
    LOGGER.debug('Reach bracketed in [{:.4f}, {:.4f}] {}'.format(lo, hi, axis))
    return ReachResult(reach=float(lo), flagged=False)
