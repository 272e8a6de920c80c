# intersection/queue_service.py

"""
Stationary minor-road queue length.

The queue seen by departing drivers has PGF X(z) = sum_j f_j(z), where the
vector f(z) solves

    (z I - A(z)^T) f(z) = (B(z) A*(z)^T - A(z)^T) f(0)

with A(z) (ordinary services) and A*(z) (services started on an empty queue)
built from the conditional service transforms at s = lambda (1 - B(z)).
The unknown f(0) is pinned down by the N_bar - 1 roots of det(z I - A(z)) in
the unit disk: at each root the right-hand side must be orthogonal to the
null space. The remaining degree of freedom is fixed by X(1) = 1.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg

from .capacity_service import check_defect
from .conf import app_setting
from .dual import Dual
from .equilibrium_service import stability_margin
from .exceptions import (AnalysisError, EmptyProbabilityError, InstabilityError,
                         InversionError, RootCountError)
from .kernel import lag_matrix, service_matrix
from .numerics import null_space, open_phase_winding, phase_winding, richardson_limit
from .scenario import BatchSizeLaw, ScenarioConfig

logger = logging.getLogger(__name__)

EPOCHS = ('departure', 'arbitrary')
# Points closer than this to a determinant root are evaluated by averaging on a small circle.
NEAR_ROOT = 1e-7
NEAR_ROOT_RADIUS = 1e-6
LOCAL_NODES = 64
RETRY_RADII = (0.2, 0.35, 0.5, 0.65, 0.8, 0.95)
RETRY_ANGLES = 16


def batch_pgf(law: BatchSizeLaw, z) -> complex:
    """B(z) = sum_n P(B = n) z^n."""
    return complex(law.pgf(complex(z)))


class PgfSystem:
    """
    The matrix families A(z), A*(z) of one scenario, renormalized by their
    row masses at z = 1 so that both are stochastic there.

    :param config: Scenario with a positive batch rate
    :raises TruncationDefectError: if the z = 1 rows lose too much mass
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.n = config.n_types
        self.lam = config.batch_rate
        self.law = config.batch_size
        self.lags = config.lags.reshape(-1)

        raw = np.real(service_matrix(config, 0.0, self.lags))
        self.mass = raw.sum(axis=1)
        check_defect(float(max(0.0, np.max(1.0 - self.mass))), config)
        raw_star = np.real(lag_matrix(config, 0.0, self.lags, self.lam))
        self.mass_star = raw_star.sum(axis=1)
        check_defect(float(max(0.0, np.max(1.0 - self.mass_star))), config)

    def argument(self, z) -> complex:
        """s(z) = lambda (1 - B(z))."""
        return self.lam * (1.0 - batch_pgf(self.law, z))

    def transition(self, z) -> np.ndarray:
        """A(z), renormalized."""
        matrix = service_matrix(self.config, self.argument(z), self.lags)
        return np.asarray(matrix, dtype=complex) / self.mass[:, None]

    def transition_with_slope(self, z):
        """A(z) and dA/dz, by forward differentiation through s(z)."""
        s = Dual(self.argument(z), complex(-self.lam * self.law.pgf_derivative(complex(z))))
        matrix = service_matrix(self.config, s, self.lags)
        return matrix.value / self.mass[:, None], matrix.slope / self.mass[:, None]

    def matrices(self, z, renormalize: bool = True):
        """(A(z), A*(z)); with ``renormalize=False`` the raw kernel values are returned."""
        s = self.argument(z)
        a = np.asarray(service_matrix(self.config, s, self.lags), dtype=complex)
        a_star = np.asarray(lag_matrix(self.config, s, self.lags, self.lam), dtype=complex)
        if renormalize:
            a = a / self.mass[:, None]
            a_star = a_star / self.mass_star[:, None]
        return a, a_star

    def characteristic(self, z) -> np.ndarray:
        """z I - A(z)."""
        return complex(z) * np.eye(self.n) - self.transition(z)

    def det_sign(self, z) -> complex:
        sign, _ = np.linalg.slogdet(self.characteristic(z))
        return sign

    def log_derivative(self, z) -> complex:
        """d/dz log det(z I - A(z)) = tr((z I - A)^{-1} (I - A'))."""
        value, slope = self.transition_with_slope(z)
        identity = np.eye(self.n)
        return np.trace(np.linalg.solve(complex(z) * identity - value, identity - slope))

    def components(self, z, f0: np.ndarray) -> np.ndarray:
        """f(z) for a given f(0)."""
        a, a_star = self.matrices(z)
        b = batch_pgf(self.law, z)
        rhs = (b * a_star.T - a.T) @ f0
        try:
            return np.linalg.solve(complex(z) * np.eye(self.n) - a.T, rhs)
        except np.linalg.LinAlgError as exc:
            raise AnalysisError(f"singular system at z={complex(z):.6g} (not a located root): {exc}")


@lru_cache(maxsize=16)
def pgf_system(config: ScenarioConfig) -> PgfSystem:
    if config.batch_rate <= 0.0:
        raise AnalysisError('queue-length analysis needs a positive minor-road batch rate')
    return PgfSystem(config)


def build_A_matrices(config: ScenarioConfig, z, renormalize: bool = True):
    """
    A(z) and A*(z) with entry (source, target) equal to the conditional service
    transform at s = lambda (1 - B(z)) with the source's lag.

    :param config: Scenario
    :param z: Complex point, |z| <= 1
    :param renormalize: Divide rows by their z = 1 mass
    :return: Tuple of two (N_bar, N_bar) complex arrays
    """
    return pgf_system(config).matrices(z, renormalize=renormalize)


@dataclass(frozen=True)
class RootSet:
    roots: tuple
    multiplicities: tuple
    contour_count: int
    zero_null_dim: int = 0

    @property
    def total(self) -> int:
        return int(sum(self.multiplicities))


def _signs(system: PgfSystem, points) -> np.ndarray:
    return np.array([system.det_sign(z) for z in points])


def _det_signs(system: PgfSystem, points, n_jobs: int) -> np.ndarray:
    points = np.asarray(points, dtype=complex)
    if n_jobs == 1 or points.size < 256:
        signs = _signs(system, points)
    else:
        chunks = np.array_split(points, 4 * max(1, abs(n_jobs)))
        parts = Parallel(n_jobs=n_jobs, prefer='threads')(delayed(_signs)(system, chunk) for chunk in chunks)
        signs = np.concatenate(parts)
    if np.any(signs == 0):
        raise RootCountError('determinant vanishes on a counting contour; roots lie on it')
    return signs


def contour_count(system: PgfSystem, n_jobs: int = None) -> int:
    """
    Number of zeros of det(z I - A(z)) inside |z| = 1 - ROOT_CONTOUR_GAP, by the
    argument principle. The coefficients are real, so only the upper half
    circle is sampled and its phase change doubled.
    """
    n_jobs = n_jobs or app_setting('N_JOBS')
    radius = 1.0 - app_setting('ROOT_CONTOUR_GAP')
    nodes = app_setting('ROOT_CONTOUR_NODES')
    theta = np.linspace(0.0, math.pi, nodes // 2 + 1)
    turns = 2.0 * open_phase_winding(_det_signs(system, radius * np.exp(1j * theta), n_jobs))
    count = int(round(turns))
    if abs(turns - count) > 0.05:
        raise RootCountError(f"contour phase change {turns:.4f} turns is not an integer; refine ROOT_CONTOUR_NODES")
    return count


def _local_count(system: PgfSystem, center: complex, radius: float, nodes: int = LOCAL_NODES) -> int:
    points = center + radius * np.exp(2j * math.pi * np.arange(nodes) / nodes)
    return int(round(phase_winding(_signs(system, points))))


def _newton(system: PgfSystem, z: complex, known=(), max_iter: int = 60):
    """
    Newton's method on det(z I - A(z)) with the ``known`` (root, multiplicity)
    pairs divided out.
    """
    step = math.inf
    z = complex(z)
    for _ in range(max_iter):
        try:
            log_derivative = system.log_derivative(z)
        except np.linalg.LinAlgError:
            return z, True
        for root, mult in known:
            log_derivative -= mult / (z - root)
        if log_derivative == 0 or not np.isfinite(log_derivative):
            return z, False
        step = 1.0 / log_derivative
        z -= step
        if abs(step) < 1e-14 * max(1.0, abs(z)):
            return z, True
        if abs(z) > 2.0:
            return z, False
    return z, abs(step) < 1e-10


def _follow_branch(system: PgfSystem, start: complex, max_iter: int):
    """Fixed-point iteration z <- mu(A(z)) along the eigenvalue branch that starts at ``start``."""
    z = start
    for _ in range(max_iter):
        eigenvalues = np.linalg.eigvals(system.transition(z))
        nxt = eigenvalues[np.argmin(np.abs(eigenvalues - z))]
        if abs(nxt) > 1.0 + 1e-12:
            return None
        step = abs(nxt - z)
        z = nxt
        if step < 1e-6:
            polished, ok = _newton(system, z)
            if ok and abs(polished) <= 1.0 + 1e-10:
                return polished
            return None
    return None


def _merge(points, tol: float) -> list:
    merged = []
    for z in points:
        if all(abs(z - other) > tol for other in merged):
            merged.append(z)
    return merged


def _is_unit(z: complex, tol: float) -> bool:
    return abs(z - 1.0) <= tol


def _branch_roots(system: PgfSystem, n_jobs: int) -> list:
    zero_tol = app_setting('ROOT_ZERO_TOL')
    merge_tol = app_setting('ROOT_MERGE_TOL')
    starts = [mu for mu in np.linalg.eigvals(system.transition(0.0)) if abs(mu) > zero_tol]
    # Branches are independent; real inputs give conjugate pairs so only one of each is followed.
    starts = [mu for mu in _merge(starts, merge_tol) if mu.imag >= -merge_tol]
    found = Parallel(n_jobs=n_jobs, prefer='threads')(
        delayed(_follow_branch)(system, mu, app_setting('ROOT_MAX_ITER')) for mu in starts
    )
    roots = []
    for z in found:
        if z is None or abs(z) <= zero_tol or _is_unit(z, merge_tol) or abs(z) >= 1.0:
            continue
        roots.append(z)
        if abs(z.imag) > merge_tol:
            roots.append(z.conjugate())
    return _merge(roots, merge_tol)


def _separation(z: complex, others) -> float:
    distances = [abs(z - other) for other in others if other is not z]
    return min(distances) if distances else 1.0


def _interior_multiplicities(system: PgfSystem, roots: list) -> list:
    """(root, multiplicity) for each nonzero interior root; spurious points get dropped."""
    located = []
    anchors = list(roots) + [0j, 1.0 + 0j]
    for z in roots:
        radius = min(0.25 * _separation(z, anchors), 0.25 * (1.0 - abs(z)), 1e-3)
        mult = _local_count(system, z, radius)
        if mult > 0:
            located.append((z, mult))
        else:
            logger.debug("[ROOTS] discarded spurious root candidate %s", z)
    return located


def _zero_multiplicity(system: PgfSystem, roots: list, null_dim: int) -> int:
    """Order of the zero of det at z = 0, counted on shrinking circles."""
    if null_dim == 0:
        return 0
    nearest = min((abs(z) for z in roots), default=1.0)
    radius = min(0.5, 0.5 * nearest)
    # the phase turns null_dim times or more around the cluster; keep each step well below pi
    nodes = max(LOCAL_NODES, 8 * (null_dim + 2))
    for _ in range(4):
        mult = _local_count(system, 0j, radius, nodes)
        if 0 <= mult <= null_dim:
            return mult
        radius *= 0.1
    raise RootCountError(
        f"root cluster at z=0 has multiplicity {mult} but A(0) has a null space of dimension {null_dim}"
    )


def _deflated_search(system: PgfSystem, located: list, zero_mult: int, target: int) -> list:
    """Newton from a polar grid with every located root divided out, until ``target`` roots are known."""
    zero_tol = app_setting('ROOT_ZERO_TOL')
    merge_tol = app_setting('ROOT_MERGE_TOL')
    gap = app_setting('ROOT_CONTOUR_GAP')
    known = [(0j, zero_mult)] if zero_mult else []
    known += [(1.0 + 0j, 1)] + list(located)
    roots = [z for z, _ in located]

    def found():
        return zero_mult + sum(mult for z, mult in known if z != 0 and not _is_unit(z, merge_tol))

    for radius in RETRY_RADII:
        for angle in np.linspace(0.0, math.pi, RETRY_ANGLES):
            if found() >= target:
                return roots
            z, ok = _newton(system, radius * np.exp(1j * angle), known)
            if not ok or abs(z) >= 1.0 - gap or abs(z) <= zero_tol:
                continue
            if any(abs(z - other) <= merge_tol for other, _ in known):
                continue
            candidates = [z, z.conjugate()] if abs(z.imag) > merge_tol else [complex(z.real, 0.0)]
            for candidate in candidates:
                pairs = _interior_multiplicities(system, [candidate])
                if pairs:
                    known.append(pairs[0])
                    roots.append(candidate)
    return roots


def _require_stable(config: ScenarioConfig) -> None:
    margin = stability_margin(config)
    if not margin.stable:
        raise InstabilityError(margin.rho)


@lru_cache(maxsize=16)
def find_unit_disk_roots(config: ScenarioConfig, n_jobs: int = None) -> RootSet:
    """
    Locates the N_bar roots of det(z I - A(z)) in the closed unit disk.

    Roots are followed along the eigenvalue branches of A(z) starting from
    z = 0, polished with Newton's method, and checked against an
    argument-principle count on |z| = 1 - ROOT_CONTOUR_GAP. A mismatch triggers a
    deflated Newton search before giving up.

    :param config: Scenario; must be stable
    :param n_jobs: joblib workers
    :return: RootSet including z = 1 once and the cluster at z = 0 if present
    :raises InstabilityError: rho >= 1
    :raises RootCountError: the located roots disagree with the contour count
    """
    _require_stable(config)
    system = pgf_system(config)
    n_jobs = n_jobs or app_setting('N_JOBS')
    merge_tol = app_setting('ROOT_MERGE_TOL')
    expected = system.n - 1

    count = contour_count(system, n_jobs)
    if count != expected:
        raise RootCountError(
            f"argument principle finds {count} roots inside |z| = 1 - {app_setting('ROOT_CONTOUR_GAP'):g}, "
            f"expected N_bar - 1 = {expected}"
        )

    _, sv0 = null_space(system.transition(0.0), dim=0)
    zero_tol = app_setting('ROOT_ZERO_TOL')
    null_dim = int(np.sum(sv0 <= zero_tol * max(1.0, sv0[0])))

    roots = _branch_roots(system, n_jobs)
    for attempt in range(2):
        located = _interior_multiplicities(system, roots)
        zero_mult = _zero_multiplicity(system, [z for z, _ in located], null_dim)
        found = zero_mult + sum(mult for _, mult in located)
        if found == count:
            break
        logger.info("[ROOTS] branch search found %d of %d interior roots, retrying with deflation", found, count)
        if attempt == 0:
            roots = _merge(_deflated_search(system, located, zero_mult, count), merge_tol)
    else:
        raise RootCountError(
            f"located {found} interior roots (zero cluster {zero_mult}, {len(located)} distinct nonzero) "
            f"but the contour count is {count}"
        )

    for z, mult in located:
        _, sv = null_space(system.characteristic(z), dim=0)
        if sv[-mult] > 1e-6 * sv[0]:
            raise RootCountError(f"root {z:.6g} has multiplicity {mult} but a smaller null space")

    pairs = ([(0j, zero_mult)] if zero_mult else []) + located + [(1.0 + 0j, 1)]
    logger.info("[ROOTS] %d roots located: zero cluster %d, %d nonzero interior",
                system.n, zero_mult, len(located))
    return RootSet(roots=tuple(z for z, _ in pairs), multiplicities=tuple(m for _, m in pairs),
                   contour_count=count, zero_null_dim=null_dim)


def _root_conditions(system: PgfSystem, roots: RootSet) -> np.ndarray:
    """One row c per condition c . f0 = 0, stacked as a complex array."""
    rows = []
    for z, mult in zip(roots.roots, roots.multiplicities):
        if z == 1:
            continue
        if z == 0:
            a0, a_star0 = system.matrices(0.0)
            vectors, _ = null_space(a0, dim=mult)
            slope = complex(system.law.pgf_derivative(0.0))
            for w in vectors.T:
                rows.append(w - slope * (a_star0 @ w))
            continue
        a, a_star = system.matrices(z)
        vectors, _ = null_space(z * np.eye(system.n) - a, dim=mult)
        b = batch_pgf(system.law, z)
        for w in vectors.T:
            rows.append(b * (a_star @ w) - z * w)
    return np.array(rows, dtype=complex).reshape(len(rows), system.n)


def _unit_limit(system: PgfSystem, roots: RootSet, f0: np.ndarray) -> float:
    """lim_{z -> 1-} sum_j f_j(z), by Richardson extrapolation along the real axis."""
    inner = max((abs(z) for z in roots.roots if abs(z - 1.0) > app_setting('ROOT_MERGE_TOL')), default=0.0)
    h0 = min(0.05, 0.25 * (1.0 - inner))
    levels = app_setting('RICHARDSON_LEVELS')
    values = [float(np.real(system.components(1.0 - h0 * 2.0 ** -m, f0).sum())) for m in range(levels)]
    return richardson_limit(2.0, values)


@lru_cache(maxsize=16)
def solve_empty_probs(config: ScenarioConfig) -> np.ndarray:
    """
    f(0): the joint probabilities that a departing driver of each type leaves
    the queue empty, in flat type order.

    :param config: Scenario; must be stable
    :return: Read-only nonnegative array of length N_bar
    :raises EmptyProbabilityError: the root conditions do not fix f(0) up to scale,
        or the solution has a negative entry beyond ``F0_NEGATIVE_TOL``
    """
    system = pgf_system(config)
    roots = find_unit_disk_roots(config)
    n = system.n

    if n == 1:
        direction = np.ones(1)
    else:
        conditions = _root_conditions(system, roots)
        if conditions.shape[0] != n - 1:
            raise EmptyProbabilityError(f"{conditions.shape[0]} root conditions for {n} unknowns, expected {n - 1}")
        scale = np.linalg.norm(conditions, axis=1)
        conditions = conditions / np.where(scale > 0, scale, 1.0)[:, None]
        stacked = np.vstack([conditions.real, conditions.imag])
        _, sv, vh = linalg.svd(stacked)
        tol = 1e-9 * sv[0]
        smallest = sv[n - 1] if sv.size >= n else 0.0
        if sv[n - 2] <= tol:
            raise EmptyProbabilityError(
                f"root conditions have a null space of dimension > 1 (singular values {sv[n - 2]:.2e}, "
                f"{smallest:.2e}); a root was probably missed"
            )
        if smallest > 1e-6 * sv[0]:
            raise EmptyProbabilityError(
                f"root conditions admit no nonzero solution (smallest singular value {smallest / sv[0]:.2e} relative)"
            )
        direction = vh[-1]
        direction = direction * np.sign(direction.sum())

    total = _unit_limit(system, roots, direction.astype(complex))
    f0 = direction / total

    if f0.min() < -app_setting('F0_NEGATIVE_TOL'):
        raise EmptyProbabilityError(f"f(0) has a negative entry {f0.min():.3e} at flat type {int(np.argmin(f0)) + 1}")
    if f0.min() < -app_setting('F0_CLAMP_TOL'):
        logger.warning("[QUEUE] clamping f(0) entry %.3e to zero", f0.min())
    f0 = np.clip(f0, 0.0, None)
    f0.flags.writeable = False
    logger.info("[QUEUE] P(departure leaves empty queue) = %.8f", f0.sum())
    return f0


def _pgf_value(system: PgfSystem, roots: RootSet, f0: np.ndarray, z: complex) -> complex:
    if abs(z - 1.0) <= 1e-12:
        return 1.0 + 0j
    if abs(z) <= 1e-12:
        return complex(f0.sum())
    if min(abs(z - root) for root in roots.roots) < NEAR_ROOT:
        offsets = NEAR_ROOT_RADIUS * np.exp(2j * math.pi * np.arange(8) / 8)
        return complex(np.mean([system.components(z + dz, f0).sum() for dz in offsets]))
    return complex(system.components(z, f0).sum())


def _arbitrary_factor(law: BatchSizeLaw, z: complex) -> complex:
    """E[B] (1 - z) / (1 - B(z)), with its limit 1 at z = 1."""
    denominator = 1.0 - batch_pgf(law, z)
    if abs(1.0 - z) <= 1e-12 or abs(denominator) <= 1e-14:
        return 1.0 + 0j
    return law.mean * (1.0 - z) / denominator


def queue_pgf(config: ScenarioConfig, z) -> complex:
    """
    X(z): PGF of the queue length left behind by a departing driver.

    :param config: Scenario; must be stable
    :param z: Complex point with |z| <= 1 (points slightly outside are allowed)
    :return: Complex PGF value
    """
    system = pgf_system(config)
    roots = find_unit_disk_roots(config)
    return _pgf_value(system, roots, solve_empty_probs(config), complex(z))


def arbitrary_epoch_pgf(config: ScenarioConfig, z) -> complex:
    """Time-average number of minor-road vehicles present, X(z) E[B] (1 - z) / (1 - B(z))."""
    z = complex(z)
    if abs(z - 1.0) <= 1e-12:
        return 1.0 + 0j
    return queue_pgf(config, z) * _arbitrary_factor(config.batch_size, z)


def _epoch_values(config: ScenarioConfig, points, epoch: str) -> np.ndarray:
    system = pgf_system(config)
    roots = find_unit_disk_roots(config)
    f0 = solve_empty_probs(config)
    values = np.array([_pgf_value(system, roots, f0, z) for z in points])
    if epoch == 'arbitrary':
        values = values * np.array([_arbitrary_factor(config.batch_size, z) for z in points])
    return values


def _check_epoch(epoch: str) -> None:
    if epoch not in EPOCHS:
        raise ValueError(f"epoch must be one of {EPOCHS}, got '{epoch}'")


def queue_pmf(config: ScenarioConfig, n_max: int, epoch: str = 'departure', samples: int = None,
              n_jobs: int = None) -> np.ndarray:
    """
    P(X = n) for n = 0..n_max by inverting the PGF on a circle of radius rho < 1.

    The coefficients a_n = P(X = n) rho^n are the discrete Fourier transform of
    K samples; aliasing adds at most rho^K to each recovered probability, so K
    doubles until that bound and the observed tail of the coefficients are
    below ``ALIASING_TOL``.

    :param config: Scenario; must be stable
    :param n_max: Largest queue length returned
    :param epoch: 'departure' or 'arbitrary'
    :param samples: Starting K (defaults to ``INVERSION_SAMPLES``)
    :param n_jobs: joblib workers
    :return: Array of n_max + 1 probabilities
    :raises InversionError: when the bound cannot be met within ``INVERSION_MAX_SAMPLES``
    """
    _check_epoch(epoch)
    if n_max < 0:
        raise ValueError('n_max must be nonnegative')
    n_jobs = n_jobs or app_setting('N_JOBS')
    tol = app_setting('ALIASING_TOL')
    cap = app_setting('INVERSION_MAX_SAMPLES')
    solve_empty_probs(config)

    radius = max(0.99, 1e-6 ** (1.0 / max(n_max, 1)))
    k = samples or app_setting('INVERSION_SAMPLES')
    k = max(k, 2 ** math.ceil(math.log2(2 * (n_max + 1))))

    while k <= cap:
        if radius ** k > tol:
            k *= 2
            continue
        index = np.arange(k // 2 + 1)
        points = radius * np.exp(2j * math.pi * index / k)
        chunks = np.array_split(points, max(1, 4 * abs(n_jobs)))
        parts = Parallel(n_jobs=n_jobs, prefer='threads')(
            delayed(_epoch_values)(config, chunk, epoch) for chunk in chunks
        )
        upper = np.concatenate(parts)
        # X(conj z) = conj X(z)
        values = np.concatenate([upper, np.conj(upper[1:k - k // 2][::-1])])
        coefficients = np.fft.fft(values) / k
        tail = np.max(np.abs(coefficients[k // 2:]))
        if tail <= tol:
            probabilities = np.real(coefficients[:n_max + 1]) / radius ** np.arange(n_max + 1)
            logger.info("[QUEUE] inverted %s-epoch PGF with K=%d, rho=%.6f: mass %.10f on 0..%d",
                        epoch, k, radius, probabilities.sum(), n_max)
            return probabilities
        logger.info("[QUEUE] coefficient tail %.2e above %.0e at K=%d, doubling", tail, tol, k)
        k *= 2
    raise InversionError(f"aliasing bound {tol:.0e} not met with K <= {cap} samples (rho={radius:.6f})")


def mean_queue_length(config: ScenarioConfig, epoch: str = 'departure') -> float:
    """
    X'(1) by central differences at 1 +- h, extrapolated in h^2.

    :param config: Scenario; must be stable
    :param epoch: 'departure' or 'arbitrary'
    :return: Mean queue length (vehicles)
    """
    _check_epoch(epoch)
    rho = stability_margin(config).rho
    h0 = min(0.02, max(1e-4, 0.02 * (1.0 - rho)))
    levels = app_setting('RICHARDSON_LEVELS')
    values = []
    for m in range(levels):
        h = h0 * 2.0 ** -m
        upper, lower = _epoch_values(config, [1.0 + h, 1.0 - h], epoch)
        values.append(float(np.real(upper - lower)) / (2.0 * h))
    return richardson_limit(4.0, values)
