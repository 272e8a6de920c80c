# intersection/kernel.py

"""
Conditional service-time transforms of the gap-acceptance model.

For a driver of profile r who finds a lag ``y`` left by their predecessor, the
joint transform of their service time (scan + merge) and of the event "served at
attempt j with gap index l" factorizes as

    G_(1,l,r)(s, y) = p_r p_(1,l,r) e^{-q max(u_(1,l,r) - y, 0)} e^{-s Delta_r}
    G_(j,l,r)(s, y) = W_(j,l,r)(s) * e^{-s y} * F_r(s, y)            (j >= 2)

where ``F_r(s, y) = sum_k p_(1,k,r) (1 - e^{-(s+q) max(u_(1,k,r) - y, 0)})`` is
the first-attempt failure factor and ``W`` collects the attempt-dependent part.
Every public function is vectorized over lags and returns one column per
target type, in flat type order.

The transform argument ``s`` may be a complex number or a :class:`Dual`; in the
latter case every result carries its exact derivative.
"""

import numpy as np

from . import dual
from .dual import Dual
from .scenario import ScenarioConfig, TypeIndex


def _attempt_weights(config: ScenarioConfig, s):
    """
    W_(j,l,r)(s) for every type, as an (N, M, R) array (or Dual).

    Row j=1 holds p_r p_(1,l,r) e^{-s Delta_r}; the lag-dependent factors are
    applied by the callers.
    """
    q = config.major_rate
    u, weights = config.gap_values, config.type_probs
    merge = dual.exp(-1.0 * s * config.merge_times)

    rows = [weights[0] * merge]
    if config.attempts == 1:
        return dual.stack(rows)

    if q == 0.0:
        zero = np.zeros_like(weights[0], dtype=complex)
        rows.extend(zero for _ in range(1, config.attempts))
        return dual.stack(rows)

    ratio = q / (s + q)
    # 1 - E[e^{-(s+q) T_(m,r)}] for every attempt m, shape (N, R)
    failure = 1.0 - dual.total(config.gap_probs * dual.exp(-1.0 * (s + q) * u), axis=1)

    prefix = ratio
    for j0 in range(1, config.attempts):
        if j0 >= 2:
            prefix = prefix * ratio * failure[j0 - 1]
        row = (weights[j0] * np.exp(-q * u[j0])) * merge * prefix
        if j0 == config.attempts - 1 and config.saturating:
            row = row / (1.0 - ratio * failure[j0])
        rows.append(row)
    return dual.stack(rows)


def _assemble(first, later, attempts: int):
    """
    Builds the (n, N, M, R) lag factor with ``first`` (n, M, R) on attempt 1
    and ``later`` (n, R) broadcast over attempts 2..N.
    """
    n, M, R = np.shape(first)
    value = np.empty((n, attempts, M, R), dtype=complex)
    value[:, 0] = dual.value_of(first)
    value[:, 1:] = np.asarray(dual.value_of(later))[:, None, None, :]
    if not isinstance(first, Dual) and not isinstance(later, Dual):
        return value
    slope = np.zeros_like(value)
    slope[:, 0] = np.broadcast_to(dual.slope_of(first), (n, M, R))
    slope[:, 1:] = np.broadcast_to(dual.slope_of(later), (n, R))[:, None, None, :]
    return Dual(value, slope)


def _flat(x, n: int):
    if isinstance(x, Dual):
        return Dual(x.value.reshape(n, -1), x.slope.reshape(n, -1))
    return x.reshape(n, -1)


def service_matrix(config: ScenarioConfig, s, lags):
    """
    Evaluates G_(j,l,r)(s, y) for every lag in ``lags`` and every target type.

    :param config: Scenario
    :param s: Transform argument (complex or Dual), Re(s) >= 0
    :param lags: Array of lags y >= 0 (seconds)
    :return: (len(lags), N_bar) complex array, or a Dual of such arrays
    """
    y = np.atleast_1d(np.asarray(lags, dtype=float))
    q = config.major_rate
    first_gaps = config.gap_values[0]
    first_probs = config.gap_probs[0]

    shortfall = np.maximum(first_gaps[None, :, :] - y[:, None, None], 0.0)
    success = np.exp(-q * shortfall)
    failure = dual.total(first_probs * (1.0 - dual.exp(-1.0 * (s + q) * shortfall)), axis=1)
    failure = dual.exp(-1.0 * s * y[:, None]) * failure

    factors = _assemble(success, failure, config.attempts)
    weights = _attempt_weights(config, s)
    return _flat(weights[None] * factors if isinstance(weights, Dual) else factors * weights[None], len(y))


def _exp_integral(lam: float, b, decay_at_b, gamma):
    """
    lam * int_0^b e^{E(y)} dy for E(y) linear with slope ``gamma`` and
    E(b) = ``decay_at_b``. Anchored at whichever end keeps the exponent <= 0.
    """
    if np.real(dual.value_of(gamma)) >= 0.0:
        return lam * b * dual.exp(decay_at_b) * dual.phi1(-1.0 * gamma * b)
    decay_at_0 = decay_at_b - gamma * b
    return lam * b * dual.exp(decay_at_0) * dual.phi1(gamma * b)


def lag_matrix(config: ScenarioConfig, s, lags, lam: float):
    """
    Lag-averaged transforms for a driver who arrives to an empty queue an
    exponential(lam) time after their predecessor left a lag ``ubar``:

        int_0^ubar lam e^{-lam x} G(s, ubar - x) dx + G(s, 0) e^{-lam ubar}

    evaluated in closed form piece by piece between the first-attempt gaps.

    :param config: Scenario
    :param s: Transform argument (complex or Dual)
    :param lags: Array of predecessor lags ubar >= 0 (seconds)
    :param lam: Batch arrival rate (per second), >= 0
    :return: (len(lags), N_bar) complex array, or a Dual
    """
    ubar = np.atleast_1d(np.asarray(lags, dtype=float))[:, None, None]
    q = config.major_rate
    u1 = config.gap_values[0][None, :, :]
    p1 = config.gap_probs[0]
    b = np.minimum(u1, ubar)

    # Attempt 1: the lag only changes the probability of accepting the first gap.
    share = lam / (lam + q) if lam + q > 0.0 else 0.0
    first = (share * (np.exp(-lam * (ubar - b) - q * (u1 - b)) - np.exp(-lam * ubar - q * u1))
             + (1.0 - np.exp(-lam * (ubar - b)))
             + np.exp(-q * u1 - lam * ubar))

    # Attempts 2..N: average e^{-s y} F_r(s, y) over the lag.
    if lam > 0.0:
        gamma = lam - s
        rising = _exp_integral(lam, b, -lam * (ubar - b) - s * b, gamma)
        cancelled = dual.exp(-1.0 * s * u1) * _exp_integral(
            lam, b, -lam * (ubar - b) - q * (u1 - b), lam + q)
    else:
        rising = np.zeros_like(b, dtype=complex)
        cancelled = np.zeros_like(b, dtype=complex)
    boundary = np.exp(-lam * ubar) * (1.0 - dual.exp(-1.0 * (s + q) * u1))
    later = dual.total(p1 * (rising - cancelled + boundary), axis=1)

    factors = _assemble(np.broadcast_to(first, b.shape).astype(complex), later, config.attempts)
    weights = _attempt_weights(config, s)
    n = ubar.shape[0]
    return _flat(weights[None] * factors if isinstance(weights, Dual) else factors * weights[None], n)


def partial_mean_matrix(config: ScenarioConfig, lags) -> np.ndarray:
    """-dG/ds at s=0 for every lag and target type (seconds x probability)."""
    derivative = service_matrix(config, Dual(0.0 + 0.0j, 1.0 + 0.0j), lags)
    return -np.real(derivative.slope)


def defect_by_profile(config: ScenarioConfig, lags) -> np.ndarray:
    """(len(lags), R) probabilities that a driver of each profile fails every modeled attempt."""
    masses = np.real(service_matrix(config, 0.0, lags))
    n = masses.shape[0]
    per_profile = masses.reshape(n, config.attempts * config.gaps_per_attempt, config.n_profiles).sum(axis=1)
    return 1.0 - per_profile / config.profile_probs[None, :]


def cond_service_lst(config: ScenarioConfig, target: TypeIndex, s, y: float) -> complex:
    """
    G_(j,l,r)(s, y): transform of the service time jointly with being served as ``target``.

    :param config: Scenario
    :param target: Type (j, l, r) of the driver
    :param s: Complex transform argument, Re(s) >= 0
    :param y: Lag available at scan start (seconds), >= 0
    :return: Complex transform value
    """
    if y < 0:
        raise ValueError(f"lag must be nonnegative, got {y}")
    return complex(service_matrix(config, s, [y])[0, config.flatten(target) - 1])


def lag_averaged_lst(config: ScenarioConfig, target: TypeIndex, s, ubar: float, lam: float) -> complex:
    if ubar < 0:
        raise ValueError(f"lag must be nonnegative, got {ubar}")
    return complex(lag_matrix(config, s, [ubar], lam)[0, config.flatten(target) - 1])


def cond_service_partial_mean(config: ScenarioConfig, target: TypeIndex, y: float) -> float:
    """-d/ds G_(j,l,r)(s, y) at s=0, by forward-mode differentiation."""
    if y < 0:
        raise ValueError(f"lag must be nonnegative, got {y}")
    return float(partial_mean_matrix(config, [y])[0, config.flatten(target) - 1])


def mass_defect(config: ScenarioConfig, profile: int, y: float) -> float:
    """Probability that a profile-``profile`` driver (1-based) with lag ``y`` fails all N attempts."""
    if not 1 <= profile <= config.n_profiles:
        raise IndexError(f"profile {profile} out of range 1..{config.n_profiles}")
    return float(defect_by_profile(config, [y])[0, profile - 1])
