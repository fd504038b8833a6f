"""
Two-way post-processing on Bell-diagonal states.

A Bell-diagonal state is stored as (q00, q10, q11, q01) where the first index
flags a bit error and the second a phase error. The bit error rate is
q10 + q11 and the phase error rate is q11 + q01.
"""
import logging
from collections import namedtuple

import numpy as np
from scipy.optimize import brentq

from .core_model import component_gains, multi_photon_error
from .errors import DegenerateStateError, ParameterError
from .keyrate import binary_entropy, clipped_error_entropy, make_rate
from .optimize import ROOT_MAXITER, ROOT_XTOL, golden_section

LOGGER = logging.getLogger('decoyqkd')
LOGGER.setLevel(logging.DEBUG)

MAX_STEPS = 12
## Smallest hashing yield counted as key; long B sequences leave roundoff of order 1e-16
YIELD_TOL = 1e-12
STEP_KINDS = ('B', 'P')


class BellDiag(namedtuple('BellDiag', ['q00', 'q10', 'q11', 'q01'])):
    """
    Bell-diagonal two-qubit state.
    """
    __slots__ = ()

    @property
    def delta_b(self):
        return self.q10 + self.q11

    @property
    def delta_p(self):
        return self.q11 + self.q01

    @classmethod
    def from_rates(cls, delta_b, delta_p, q11=0.0):
        """
        State with the given bit and phase error rates and q11 weight.
        """
        state = cls(1.0 - delta_b - delta_p + q11, delta_b - q11, q11, delta_p - q11)
        return validate_state(state)


def validate_state(state, tol=1e-12):
    values = np.array(state, dtype=float)
    if np.any(values < -tol) or abs(values.sum() - 1.0) > tol:
        err_msg = 'Not a Bell-diagonal state (entries must be nonnegative and sum to 1): {}'
        raise ParameterError(err_msg.format(tuple(state)))
    return state


StepSequence = namedtuple('StepSequence', ['steps'])

TaggedInput = namedtuple('TaggedInput', [
    'omega_v', 'omega', 'omega_m', 'e1', 'e_m', 'q11_v', 'q11_m', 'a'])
TaggedInput.__new__.__defaults__ = (0.25, None, None)

RegionResult = namedtuple('RegionResult', ['tolerable', 'best_sequence'])


def b_step(control, target):
    """
    Bit-error-detecting step: compare parities of a control and a target pair
    and keep the control pair when they agree.

    Returns:
        survivor:  Control pair conditioned on agreement
                   (Type: BellDiag)

        p_s:       Agreement probability (1 - dC)(1 - dT) + dC dT
                   (Type: float)
    """
    c = control
    t = target
    p_s = (1.0 - c.delta_b) * (1.0 - t.delta_b) + c.delta_b * t.delta_b
    if p_s <= 0:
        raise DegenerateStateError('B step survival probability is zero')
    survivor = BellDiag(q00=(c.q00 * t.q00 + c.q01 * t.q01) / p_s,
                        q10=(c.q10 * t.q10 + c.q11 * t.q11) / p_s,
                        q11=(c.q10 * t.q11 + c.q11 * t.q10) / p_s,
                        q01=(c.q00 * t.q01 + c.q01 * t.q00) / p_s)
    return survivor, p_s


def _b_map(q00, q10, q11, q01):
    p_s = (q00 + q01) ** 2 + (q10 + q11) ** 2
    return ((q00 * q00 + q01 * q01) / p_s,
            (q10 * q10 + q11 * q11) / p_s,
            2.0 * q10 * q11 / p_s,
            2.0 * q00 * q01 / p_s)


def _p_map(q00, q10, q11, q01):
    return (q00 ** 3 + 3 * q00 ** 2 * q01 + 3 * q10 ** 2 * (q00 + q01) + 6 * q00 * q10 * q11,
            q10 ** 3 + 3 * q10 ** 2 * q11 + 3 * q00 ** 2 * (q10 + q11) + 6 * q00 * q10 * q01,
            q11 ** 3 + 3 * q10 * q11 ** 2 + 3 * q01 ** 2 * (q10 + q11) + 6 * q00 * q11 * q01,
            q01 ** 3 + 3 * q00 * q01 ** 2 + 3 * q11 ** 2 * (q00 + q01) + 6 * q10 * q11 * q01)


def p_step(state):
    """
    Phase-error-reducing step on three copies of the same pair.

    The bit error of the output is the parity of the three bit errors and its
    phase error the majority of the three phase errors, so
    delta_b' = 3 d (1 - d)^2 + d^3 and delta_p' = 3 d^2 (1 - d) + d^3.
    """
    return BellDiag(*_p_map(*state))


def one_locc_yield(delta_b, delta_p):
    """
    Yield 1 - H2(delta_b) - H2(delta_p) of one-way hashing.
    """
    return 1.0 - clipped_error_entropy(delta_b) - clipped_error_entropy(delta_p)


def _dfs(states, index, prefix, depth, max_steps, best_len, best_seq):
    q00, q10, q11, q01 = states
    ok = one_locc_yield(q10 + q11, q11 + q01) > YIELD_TOL
    better = ok & (best_len[index] > depth)
    if np.any(better):
        best_len[index[better]] = depth
        best_seq[index[better]] = prefix

    if depth == max_steps:
        return
    # points already resolved at this depth or shallower cannot improve
    open_ = best_len[index] > depth + 1
    if not np.any(open_):
        return
    sub = tuple(s[open_] for s in states)
    idx = index[open_]
    for kind, step in (('B', _b_map), ('P', _p_map)):
        _dfs(step(*sub), idx, prefix + kind, depth + 1, max_steps, best_len, best_seq)


def gl_region_map(deltas_b, deltas_p, max_steps=MAX_STEPS, q11=0.0):
    """
    Tolerable region of B/P step sequences over a grid of error rates.

    Every sequence over {B, P} of length up to max_steps is applied to the
    input (1 - db - dp + q11, db - q11, q11, dp - q11), followed by one-way
    hashing. A point is tolerable when some sequence leaves a positive yield;
    the recorded sequence is the shortest such one, ties going to B before P.
    Points with db + dp >= 1/2 are never tolerable.

    Args:
        deltas_b:  Bit error rates
                   (Type: np.ndarray)

        deltas_p:  Phase error rates, same shape as deltas_b
                   (Type: np.ndarray)

    Kwargs:
        max_steps:  Longest sequence searched
                    (Type: int)

        q11:        Weight of the state with both errors
                    (Type: float)

    Returns:
        tolerable:  Flags per point
                    (Type: np.ndarray[bool])

        sequences:  Best sequence per point ('' for plain hashing), None
                    where the point is not tolerable
                    (Type: np.ndarray[object])
    """
    if not 0 <= max_steps <= MAX_STEPS:
        raise ParameterError('max_steps must lie in [0, {}], got {}'.format(MAX_STEPS, max_steps))
    deltas_b = np.asarray(deltas_b, dtype=float)
    deltas_p = np.asarray(deltas_p, dtype=float)
    if deltas_b.shape != deltas_p.shape:
        raise ParameterError('error-rate grids must share a shape')
    shape = deltas_b.shape
    db = deltas_b.ravel()
    dp = deltas_p.ravel()

    if np.any(db < 0) or np.any(dp < 0) or q11 < 0:
        raise ParameterError('error rates must be nonnegative')

    best_len = np.full(db.shape, max_steps + 1)
    best_seq = np.empty(db.shape, dtype=object)

    valid = (db + dp < 0.5) & (db >= q11) & (dp >= q11)
    index = np.flatnonzero(valid)
    if index.size:
        states = (1.0 - db[index] - dp[index] + q11,
                  db[index] - q11,
                  np.full(index.size, q11),
                  dp[index] - q11)
        _dfs(states, index, '', 0, max_steps, best_len, best_seq)

    tolerable = best_len <= max_steps
    return tolerable.reshape(shape), best_seq.reshape(shape)


def gl_tolerable_region(delta_b, delta_p, max_steps=MAX_STEPS, q11=0.0):
    """
    Whether some B/P sequence of at most max_steps steps makes the error
    rates tolerable, and the shortest such sequence.

    Returns:
        result:  Flag and StepSequence (None when not tolerable)
                 (Type: RegionResult)
    """
    tolerable, sequences = gl_region_map(np.array([delta_b]), np.array([delta_p]),
                                         max_steps=max_steps, q11=q11)
    if not tolerable[0]:
        return RegionResult(tolerable=False, best_sequence=None)
    return RegionResult(tolerable=True, best_sequence=StepSequence(tuple(sequences[0])))


def _ec_cost(f, error):
    if callable(f):
        return f(error)
    return f


def decoy_b_pipeline(omega, delta, delta_untagged, delta_p, n_bsteps, f=1.22):
    """
    Residue of decoy post-processing with n_bsteps B steps before one-way
    error correction and privacy amplification.

    Each B step maps, with p = d^2 + (1 - d)^2 and pu the same for the
    untagged bit error rate:
        r_B <- r_B p / 2, Omega <- Omega^2 pu / p, d <- d^2 / p,
        dp  <- 2 dp (1 - du - dp) / pu, du <- du^2 / pu
    and the residue is r_B {-f(d) H2(d) + Omega [1 - H2(dp)]}.

    Args:
        omega:           Untagged fraction Q1 / Q
                         (Type: float)

        delta:           Overall QBER
                         (Type: float)

        delta_untagged:  Bit error rate of the untagged pairs
                         (Type: float)

        delta_p:         Phase error rate of the untagged pairs
                         (Type: float)

        n_bsteps:        Number of B steps
                         (Type: int)

    Kwargs:
        f:  Error-correction inefficiency, a constant or a function of the QBER
            (Type: float or callable)

    Returns:
        result:  Residue per sifted bit; scale by q Q for the key rate
                 (Type: KeyRateResult)
    """
    if n_bsteps < 0:
        raise ParameterError('n_bsteps must be nonnegative, got {}'.format(n_bsteps))
    if not 0 <= omega <= 1:
        raise ParameterError('omega must lie in [0, 1], got {}'.format(omega))
    for name, value in (('delta', delta), ('delta_untagged', delta_untagged), ('delta_p', delta_p)):
        if not 0 <= value <= 1:
            raise ParameterError('{} must lie in [0, 1], got {}'.format(name, value))

    survival = 1.0
    for _ in range(int(n_bsteps)):
        p = delta ** 2 + (1.0 - delta) ** 2
        pu = delta_untagged ** 2 + (1.0 - delta_untagged) ** 2
        survival *= p / 2.0
        omega = omega ** 2 * pu / p
        delta = delta ** 2 / p
        delta_p = 2.0 * delta_p * (1.0 - delta_untagged - delta_p) / pu
        delta_untagged = delta_untagged ** 2 / pu

    return make_rate([
        ('error_correction', -survival * _ec_cost(f, delta) * clipped_error_entropy(delta)),
        ('privacy_amplification', survival * min(omega, 1.0) * (1.0 - clipped_error_entropy(delta_p))),
    ])


def recurrence_input(dist, profile):
    """
    Vacuum, single-photon and multi-photon fractions of the detections.
    """
    gains = component_gains(dist, profile)
    total = gains.sum()
    if total <= 0:
        raise ParameterError('no detections: the overall gain is zero')
    omega_v = gains[0] / total
    omega = gains[1] / total
    return TaggedInput(omega_v=float(omega_v), omega=float(omega),
                       omega_m=float(max(0.0, 1.0 - omega_v - omega)),
                       e1=float(profile.e[1]),
                       e_m=float(multi_photon_error(dist, profile)))


def tagged_qber(inp):
    """
    Overall QBER Omega_V / 2 + e1 Omega + e_M Omega_M.
    """
    return 0.5 * inp.omega_v + inp.e1 * inp.omega + inp.e_m * inp.omega_m


def _h_ratio(num, den):
    # a conditional probability, so the entropy is not clipped at 1/2
    if den <= 0:
        return 0.0
    return binary_entropy(min(max(num / den, 0.0), 1.0))


def recurrence_terms(inp, a):
    """
    Privacy-amplification residues of the five pairings that contain a
    single-photon pair (VS, SV, SS, SM, MS), for a given weight a of the
    single-photon state carrying both errors.
    """
    e1, em = inp.e1, inp.e_m
    qv = inp.q11_v
    qm = inp.q11_m if inp.q11_m is not None else em / 2.0
    hx = (1.0 - e1) * _h_ratio(e1 - a, 1.0 - e1)
    hy = e1 * _h_ratio(a, e1)
    hx2 = (1.0 - e1) ** 2 * _h_ratio(e1 - a, 1.0 - e1)
    hy2 = e1 ** 2 * _h_ratio(a, e1)
    hv0 = binary_entropy(min(max(1.0 - 2.0 * qv, 0.0), 1.0))
    hv1 = binary_entropy(min(max(2.0 * qv, 0.0), 1.0))
    hm0 = _h_ratio(1.0 - 2.0 * qm, 2.0 - 2.0 * em)
    hm1 = _h_ratio(qm, em)

    return {
        'VS': 0.75 - 0.25 * hv0 - 0.25 * hv1 - 0.25 * hx - 0.25 * hy,
        'SV': 0.75 - 0.5 * hx - 0.5 * hy - 0.25 * (1.0 - e1) * hv0 - 0.25 * e1 * hv1,
        'SS': 1.0 - e1 * (1.0 - e1) - 0.5 * hx - 0.5 * hy - 0.5 * hx2 - 0.5 * hy2,
        'SM': (1.0 - 0.5 * e1 * (1.0 - em) - 0.5 * em * (1.0 - e1) - 0.5 * hx - 0.5 * hy
               - 0.5 * (1.0 - e1) * (1.0 - em) * hm0 - 0.5 * e1 * em * hm1),
        'MS': (1.0 - 0.5 * em * (1.0 - e1) - 0.5 * e1 * (1.0 - em)
               - 0.5 * (1.0 - em) * hm0 - 0.5 * em * hm1
               - 0.5 * (1.0 - em) * hx - 0.5 * em * hy),
    }


def recurrence_constants(inp):
    """
    Constants C, D1, D2 of the recurrence residue bound r >= -B + C - F_a.
    """
    ov, o, om, e1, em = inp.omega_v, inp.omega, inp.omega_m, inp.e1, inp.e_m
    c = (0.75 * ov * o + o ** 2 * (1.0 - e1 + e1 ** 2)
         + 0.5 * o * om * (2.0 - e1 - em + 2.0 * e1 * em))
    d1 = 0.75 * ov * o + 0.5 * o ** 2 * (2.0 - e1) + 0.5 * o * om * (2.0 - em)
    d2 = 0.75 * ov * o + 0.5 * o ** 2 * (1.0 + e1) + 0.5 * o * om * (1.0 + em)
    return c, d1, d2


def _f_a(a, e1, d1, d2):
    return d1 * (1.0 - e1) * _h_ratio(e1 - a, 1.0 - e1) + d2 * e1 * _h_ratio(a, e1)


def maximize_f_a(e1, d1, d2):
    """
    Maximize the concave F_a = D1 (1 - e1) H2((e1 - a)/(1 - e1)) + D2 e1 H2(a/e1)
    over a in [0, e1].

    The stationary point solves
    -D1 ln((1 - e1)/(e1 - a) - 1) + D2 ln(e1/a - 1) = 0, which is decreasing in
    a; golden-section search is the fallback when it does not change sign.

    Returns:
        a:    Maximizer
              (Type: float)

        f_a:  Maximum
              (Type: float)
    """
    if e1 <= 0:
        return 0.0, 0.0
    if not e1 <= 0.5:
        raise ParameterError('e1 must not exceed 1/2, got {}'.format(e1))

    def stationarity(a):
        return -d1 * np.log((1.0 - e1) / (e1 - a) - 1.0) + d2 * np.log(e1 / a - 1.0)

    eps = e1 * 1e-12
    lo, hi = eps, e1 - eps
    try:
        if d1 <= 0 and d2 <= 0:
            raise ValueError('flat F_a')
        a = brentq(stationarity, lo, hi, xtol=ROOT_XTOL * e1, maxiter=ROOT_MAXITER)
    except ValueError:
        LOGGER.debug('F_a stationarity has no sign change, using golden section')
        a, _ = golden_section(lambda x: _f_a(x, e1, d1, d2), 0.0, e1, tol=1e-10)
    return float(a), float(_f_a(a, e1, d1, d2))


def recurrence_residue(inp, overall_delta, f=1.22):
    """
    Residue of decoy post-processing with one round of the recurrence scheme.

    r >= -B + C - F_a with
        B = 1/2 f H2(p_S) + 1/2 p_S f H2(delta^2 / p_S), p_S = delta^2 + (1 - delta)^2
    and F_a maximized over the free weight a. The bound is attained at
    q11_V = 1/4 and q11_M = e_M / 2.

    Args:
        inp:            Tagged fractions and error rates
                        (Type: TaggedInput)

        overall_delta:  Overall QBER before the recurrence
                        (Type: float)

    Kwargs:
        f:  Error-correction inefficiency, constant or function of the error rate
            (Type: float or callable)

    Returns:
        result:  Residue per sifted bit, with terms parity, error_correction and
                 privacy_amplification
                 (Type: KeyRateResult)
    """
    total = inp.omega_v + inp.omega + inp.omega_m
    if abs(total - 1.0) > 1e-9:
        raise ParameterError('tagged fractions must sum to 1, got {}'.format(total))
    if not 0 <= overall_delta <= 0.5:
        raise ParameterError('overall QBER must lie in [0, 1/2], got {}'.format(overall_delta))

    p_s = overall_delta ** 2 + (1.0 - overall_delta) ** 2
    survivor_error = overall_delta ** 2 / p_s
    # H2(p_S) = H2(1 - p_S); p_S >= 1/2 is a probability, not an error rate
    parity = 0.5 * _ec_cost(f, 1.0 - p_s) * binary_entropy(p_s)
    correction = 0.5 * p_s * _ec_cost(f, survivor_error) * clipped_error_entropy(survivor_error)

    c, d1, d2 = recurrence_constants(inp)
    a, f_a = maximize_f_a(min(inp.e1, 0.5), d1, d2)
    LOGGER.debug('Recurrence worst-case a = {:.6g}, F_a = {:.6g}'.format(a, f_a))

    return make_rate([('parity', -parity),
                      ('error_correction', -correction),
                      ('privacy_amplification', c - f_a)])


def fidelity_phase_bound(fidelity, delta_b):
    """
    Largest phase error rate compatible with a basis-dependent source of
    fidelity F: the largest dp in [db, 1/2] with
    sqrt(F) <= sqrt((1 - db)(1 - dp)) + sqrt(db dp).
    """
    if not 0 <= fidelity <= 1:
        raise ParameterError('fidelity must lie in [0, 1], got {}'.format(fidelity))
    if not 0 <= delta_b <= 0.5:
        raise ParameterError('delta_b must lie in [0, 1/2], got {}'.format(delta_b))
    if fidelity >= 1 or delta_b >= 0.5:
        return float(delta_b)

    target = np.sqrt(fidelity)

    def overlap(dp):
        return np.sqrt((1.0 - delta_b) * (1.0 - dp)) + np.sqrt(delta_b * dp) - target

    if overlap(0.5) >= 0:
        return 0.5
    if overlap(delta_b) <= 0:
        return float(delta_b)
    return float(brentq(overlap, delta_b, 0.5, xtol=ROOT_XTOL, maxiter=ROOT_MAXITER))
