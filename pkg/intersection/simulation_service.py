# intersection/simulation_service.py

"""
Discrete-event simulation of the intersection, used as the validation oracle
for the analytic engine.

Drivers are served one at a time. The head of the queue starts scanning at
the later of their arrival and their predecessor's departure, accepts an attempt
when the time to the next major-road vehicle is at least their critical gap for
that attempt, and otherwise waits for that vehicle to pass. An accepted
driver leaves the stop line ``Delta_r`` seconds later.

``reuse='full'`` keeps the real major-road timeline, so one long gap may
serve several queued drivers. ``reuse='limited'`` reproduces the analysis:
a successor sees exactly the lag their predecessor left, followed by a fresh
exponential headway.
"""

import bisect
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .conf import app_setting
from .equilibrium_service import stability_margin
from .scenario import SECONDS_PER_HOUR, ScenarioConfig

logger = logging.getLogger(__name__)

MODES = ('saturated', 'open')
REUSE = ('full', 'limited')
STREAMS = ('major', 'arrivals', 'batch_sizes', 'profiles', 'gaps')
BLOCK = 4096
CONFIDENCE = 1.96


@dataclass(frozen=True)
class SimOptions:
    seed: int = None
    mode: str = 'saturated'
    reuse: str = 'full'
    warmup: int = None
    horizon: int = None
    horizon_seconds: float = None
    replications: int = None

    def resolved(self) -> 'SimOptions':
        """Fills unset fields from the ``SIM_*`` settings and validates the result."""
        options = SimOptions(
            seed=app_setting('SIM_SEED') if self.seed is None else int(self.seed),
            mode=self.mode,
            reuse=self.reuse,
            warmup=app_setting('SIM_WARMUP') if self.warmup is None else int(self.warmup),
            horizon=app_setting('SIM_HORIZON') if self.horizon is None else int(self.horizon),
            horizon_seconds=self.horizon_seconds,
            replications=app_setting('SIM_REPLICATIONS') if self.replications is None else int(self.replications),
        )
        if options.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got '{options.mode}'")
        if options.reuse not in REUSE:
            raise ValueError(f"reuse must be one of {REUSE}, got '{options.reuse}'")
        if options.horizon <= options.warmup:
            raise ValueError(f"horizon {options.horizon} must exceed warmup {options.warmup}")
        if options.replications < 1:
            raise ValueError('replications must be at least 1')
        return options


@dataclass(frozen=True)
class SimEstimate:
    """Mean over replications with its standard error and 95% half-width."""

    point: object
    std_error: object
    ci_half_width: object
    replications: int
    values: np.ndarray = field(repr=False, default=None)
    type_frequencies: np.ndarray = field(repr=False, default=None)


def estimate(values, type_frequencies=None) -> SimEstimate:
    """
    Aggregates per-replication values (scalars or arrays, replication first).

    :param values: Sequence of replication results
    :param type_frequencies: Optional per-type frequencies to attach
    :return: SimEstimate; the standard error is NaN for a single replication
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    point = values.mean(axis=0)
    if n > 1:
        std_error = values.std(axis=0, ddof=1) / np.sqrt(n)
    else:
        std_error = np.full_like(point, np.nan)
    if np.ndim(point) == 0:
        point, std_error = float(point), float(std_error)
    return SimEstimate(point=point, std_error=std_error, ci_half_width=CONFIDENCE * std_error,
                       replications=n, values=values, type_frequencies=type_frequencies)


def rng_streams(seed: int, replication: int) -> dict:
    """
    Independent PCG64 generators, one per random source, determined by
    (seed, replication, stream).

    :param seed: Base seed
    :param replication: Replication number
    :return: Dict from stream name to ``numpy.random.Generator``
    """
    return {
        name: np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replication, i))))
        for i, name in enumerate(STREAMS)
    }


class _Draws:
    """Block-buffered draws from one generator."""

    def __init__(self, rng: np.random.Generator, sampler):
        self.rng = rng
        self.sampler = sampler
        self.buffer = []
        self.position = 0

    def next(self):
        if self.position == len(self.buffer):
            self.buffer = self.sampler(self.rng, BLOCK).tolist()
            self.position = 0
        value = self.buffer[self.position]
        self.position += 1
        return value


class PoissonMajorRoad:
    """Major-road vehicle passage times as a Poisson process of rate ``rate`` (per second)."""

    def __init__(self, rate: float, rng: np.random.Generator):
        self.rate = rate
        self.headways = _Draws(rng, lambda g, n: g.exponential(1.0 / rate, n)) if rate > 0 else None
        self.next_time = self.headways.next() if rate > 0 else float('inf')

    def advance_past(self, t: float) -> None:
        while self.next_time <= t:
            self.next_time += self.headways.next()

    def pass_vehicle(self) -> None:
        self.next_time += self.headways.next()

    def shift(self, delta: float) -> None:
        self.next_time -= delta


class ScriptedMajorRoad:
    """Major-road vehicles at fixed times, for hand-checked scenarios."""

    def __init__(self, times):
        self.times = sorted(float(t) for t in times)
        self.index = 0

    @property
    def next_time(self) -> float:
        return self.times[self.index] if self.index < len(self.times) else float('inf')

    def advance_past(self, t: float) -> None:
        while self.next_time <= t:
            self.index += 1

    def pass_vehicle(self) -> None:
        self.index += 1

    def shift(self, delta: float) -> None:
        raise NotImplementedError('scripted major roads only support full reuse')


@dataclass
class ServiceRecord:
    start: float
    departure: float
    profile: int
    attempt: int
    gap: int
    first_gap: int
    first_accepted: bool


class GapAcceptanceServer:
    """
    The stop line. ``serve`` runs one driver from scan start to departure on a
    shared major-road timeline.

    :param config: Scenario
    :param major: Major-road vehicle source
    :param streams: Output of :func:`rng_streams` (the profile and gap streams are used)
    :param reuse: 'full' or 'limited'
    """

    def __init__(self, config: ScenarioConfig, major, streams: dict, reuse: str = 'full'):
        self.config = config
        self.major = major
        self.reuse = reuse
        self.gaps = [[list(row) for row in profile.gaps.u] for profile in config.profiles]
        self.gap_cdf = [[np.cumsum(row).tolist() for row in profile.gaps.p] for profile in config.profiles]
        self.profile_cdf = np.cumsum(config.profile_probs).tolist()
        self.merge_times = config.merge_times.tolist()
        self.uniform_profiles = _Draws(streams['profiles'], lambda g, n: g.random(n))
        self.uniform_gaps = _Draws(streams['gaps'], lambda g, n: g.random(n))
        self.credit_time = -float('inf')

    @staticmethod
    def _pick(cdf, u: float) -> int:
        return min(bisect.bisect_right(cdf, u * cdf[-1]), len(cdf) - 1)

    def serve(self, start: float) -> ServiceRecord:
        r = self._pick(self.profile_cdf, self.uniform_profiles.next())
        rows = self.gaps[r]
        cdfs = self.gap_cdf[r]
        last = len(rows) - 1
        major = self.major
        major.advance_past(start)

        lag = max(self.credit_time - start, 0.0)
        t = start
        attempt = 0
        first_gap = None
        while True:
            row = min(attempt, last)
            k = self._pick(cdfs[row], self.uniform_gaps.next())
            u = rows[row][k]
            if attempt == 0:
                first_gap = k
            if major.next_time - t >= u:
                break
            t = major.next_time
            major.pass_vehicle()
            attempt += 1

        if self.reuse == 'limited':
            if attempt == 0 and lag > u:
                # The successor must see a fresh headway beyond the lag it is credited.
                major.shift(lag - u)
            self.credit_time = t + u
        departure = t + self.merge_times[r]
        return ServiceRecord(start=start, departure=departure, profile=r, attempt=min(attempt, last),
                             gap=k, first_gap=first_gap, first_accepted=attempt == 0)


def _flat_index(config: ScenarioConfig, record: ServiceRecord) -> int:
    return (record.attempt * config.gaps_per_attempt + record.gap) * config.n_profiles + record.profile


def _first_attempt_counts(config: ScenarioConfig):
    shape = (config.gaps_per_attempt, config.n_profiles)
    return np.zeros(shape), np.zeros(shape)


def _run_saturated(config: ScenarioConfig, options: SimOptions, replication: int) -> dict:
    streams = rng_streams(options.seed, replication)
    server = GapAcceptanceServer(config, PoissonMajorRoad(config.major_rate, streams['major']), streams, options.reuse)
    types = np.zeros(config.n_types)
    tries, successes = _first_attempt_counts(config)
    service_total = 0.0

    clock = 0.0
    warm_clock = 0.0
    served = 0
    while True:
        record = server.serve(clock)
        clock = record.departure
        served += 1
        if served == options.warmup:
            warm_clock = clock
        elif served > options.warmup:
            types[_flat_index(config, record)] += 1
            tries[record.first_gap, record.profile] += 1
            successes[record.first_gap, record.profile] += record.first_accepted
            service_total += record.departure - record.start
        if options.horizon_seconds is not None:
            if clock - warm_clock >= options.horizon_seconds and served > options.warmup:
                break
        elif served >= options.horizon:
            break

    counted = served - options.warmup
    return {
        'capacity': counted / (clock - warm_clock) * SECONDS_PER_HOUR,
        'type_frequencies': types / counted,
        'first_attempt_success': np.divide(successes, tries, out=np.full_like(tries, np.nan), where=tries > 0),
        'mean_service': service_total / counted,
    }


class _BatchArrivals:
    def __init__(self, config: ScenarioConfig, streams: dict):
        law = config.batch_size
        self.times = _Draws(streams['arrivals'], lambda g, n: g.exponential(1.0 / config.batch_rate, n))
        if law.kind == 'deterministic':
            self.sizes = None
            self.size = law.size
        elif law.kind == 'geometric':
            self.sizes = _Draws(streams['batch_sizes'], lambda g, n: g.geometric(law.success_prob, n))
        else:
            support = np.arange(1, len(law.pmf) + 1)
            probs = np.asarray(law.pmf) / sum(law.pmf)
            self.sizes = _Draws(streams['batch_sizes'], lambda g, n: g.choice(support, size=n, p=probs))
        self.next_time = self.times.next()

    def pop(self):
        """(time, size) of the next batch."""
        time = self.next_time
        size = self.size if self.sizes is None else int(self.sizes.next())
        self.next_time += self.times.next()
        return time, size


def _time_average_pmf(arrival_times, arrival_sizes, departure_times, start: float, end: float) -> np.ndarray:
    """Fraction of [start, end] spent with n vehicles present, for n = 0, 1, ..."""
    times = np.concatenate([arrival_times, departure_times])
    steps = np.concatenate([arrival_sizes, -np.ones(len(departure_times), dtype=int)])
    order = np.argsort(times, kind='stable')
    times, steps = times[order], steps[order]
    levels = np.cumsum(steps)
    inside = (times >= start) & (times < end)
    level_at_start = levels[np.searchsorted(times, start, side='left') - 1] if np.any(times < start) else 0
    edges = np.concatenate([[start], times[inside], [end]])
    values = np.concatenate([[level_at_start], levels[inside]])
    durations = np.diff(edges)
    pmf = np.bincount(values, weights=durations)
    return pmf / pmf.sum()


def _run_open(config: ScenarioConfig, options: SimOptions, replication: int) -> dict:
    streams = rng_streams(options.seed, replication)
    server = GapAcceptanceServer(config, PoissonMajorRoad(config.major_rate, streams['major']), streams, options.reuse)
    arrivals = _BatchArrivals(config, streams)

    queue = deque()
    arrival_times, arrival_sizes, departure_times = [], [], []
    left_behind = []
    types = np.zeros(config.n_types)
    empty_types = np.zeros(config.n_types)
    tries, successes = _first_attempt_counts(config)
    service_total = 0.0

    clock = 0.0
    warm_clock = 0.0
    served = 0
    while True:
        if not queue:
            time, size = arrivals.pop()
            arrival_times.append(time)
            arrival_sizes.append(size)
            queue.extend([time] * size)
            clock = time
        queue.popleft()
        record = server.serve(clock)
        clock = record.departure
        while arrivals.next_time <= clock:
            time, size = arrivals.pop()
            arrival_times.append(time)
            arrival_sizes.append(size)
            queue.extend([time] * size)
        departure_times.append(clock)
        served += 1

        if served == options.warmup:
            warm_clock = clock
        elif served > options.warmup:
            j = _flat_index(config, record)
            left_behind.append(len(queue))
            types[j] += 1
            if not queue:
                empty_types[j] += 1
            tries[record.first_gap, record.profile] += 1
            successes[record.first_gap, record.profile] += record.first_accepted
            service_total += record.departure - record.start
        if options.horizon_seconds is not None:
            if clock - warm_clock >= options.horizon_seconds and served > options.warmup:
                break
        elif served >= options.horizon:
            break

    counted = served - options.warmup
    departure_pmf = np.bincount(np.asarray(left_behind, dtype=int)) / counted
    arbitrary_pmf = _time_average_pmf(np.asarray(arrival_times), np.asarray(arrival_sizes, dtype=int),
                                      np.asarray(departure_times), warm_clock, clock)
    return {
        'departure_pmf': departure_pmf,
        'arbitrary_pmf': arbitrary_pmf,
        'type_frequencies': types / counted,
        'empty_frequencies': empty_types / counted,
        'first_attempt_success': np.divide(successes, tries, out=np.full_like(tries, np.nan), where=tries > 0),
        'mean_service': service_total / counted,
    }


def _pad(arrays) -> np.ndarray:
    width = max(len(a) for a in arrays)
    return np.array([np.pad(a, (0, width - len(a))) for a in arrays])


def _replicate(runner, config: ScenarioConfig, options: SimOptions, n_jobs: int) -> list:
    n_jobs = n_jobs or app_setting('N_JOBS')
    return Parallel(n_jobs=n_jobs)(
        delayed(runner)(config, options, replication) for replication in range(options.replications)
    )


def simulate_capacity(config: ScenarioConfig, opts: SimOptions = None, n_jobs: int = None) -> SimEstimate:
    """
    Minor-road capacity (veh/h) from a queue that never empties.

    :param config: Scenario
    :param opts: SimOptions; ``mode`` must be 'saturated'
    :param n_jobs: joblib workers for the replications
    :return: SimEstimate of the capacity; ``type_frequencies`` holds the mean per-type frequencies
    """
    options = (opts or SimOptions()).resolved()
    if options.mode != 'saturated':
        raise ValueError('capacity simulation needs mode=saturated')
    runs = _replicate(_run_saturated, config, options, n_jobs)
    frequencies = np.mean([run['type_frequencies'] for run in runs], axis=0)
    result = estimate([run['capacity'] for run in runs], type_frequencies=frequencies)
    logger.info("[SIM] q=%.1f veh/h reuse=%s: capacity %.2f +- %.2f veh/h (%d replications)",
                config.major_flow, options.reuse, result.point, result.ci_half_width, result.replications)
    return result


def simulate_saturated(config: ScenarioConfig, opts: SimOptions = None, n_jobs: int = None) -> dict:
    """Saturated-queue estimates: capacity, type frequencies, first-attempt successes and mean service time."""
    options = (opts or SimOptions()).resolved()
    runs = _replicate(_run_saturated, config, options, n_jobs)
    frequencies = estimate([run['type_frequencies'] for run in runs])
    return {
        'capacity': estimate([run['capacity'] for run in runs], type_frequencies=frequencies.point),
        'type_frequencies': frequencies,
        'first_attempt_success': estimate([run['first_attempt_success'] for run in runs]),
        'mean_service': estimate([run['mean_service'] for run in runs]),
    }


@dataclass(frozen=True)
class QueueSimulation:
    departure_pmf: SimEstimate
    arbitrary_pmf: SimEstimate
    mean_queue: SimEstimate
    mean_arbitrary_queue: SimEstimate
    mean_service: SimEstimate
    type_frequencies: SimEstimate
    empty_frequencies: SimEstimate
    first_attempt_success: SimEstimate


def simulate_queue(config: ScenarioConfig, opts: SimOptions = None, n_jobs: int = None) -> QueueSimulation:
    """
    Open-queue simulation with batch Poisson arrivals.

    :param config: Scenario with a positive batch rate
    :param opts: SimOptions; ``mode`` must be 'open'
    :param n_jobs: joblib workers for the replications
    :return: QueueSimulation with departure-epoch and time-average distributions
    """
    options = (opts or SimOptions(mode='open')).resolved()
    if options.mode != 'open':
        raise ValueError('queue simulation needs mode=open')
    if config.batch_rate <= 0.0:
        raise ValueError('queue simulation needs a positive batch rate')

    margin = stability_margin(config)
    if not margin.stable:
        logger.warning("[SIM] simulating an unstable queue (rho=%.4f); estimates will not settle", margin.rho)

    runs = _replicate(_run_open, config, options, n_jobs)
    departure = _pad([run['departure_pmf'] for run in runs])
    arbitrary = _pad([run['arbitrary_pmf'] for run in runs])
    levels_d = np.arange(departure.shape[1])
    levels_a = np.arange(arbitrary.shape[1])
    result = QueueSimulation(
        departure_pmf=estimate(departure),
        arbitrary_pmf=estimate(arbitrary),
        mean_queue=estimate(departure @ levels_d),
        mean_arbitrary_queue=estimate(arbitrary @ levels_a),
        mean_service=estimate([run['mean_service'] for run in runs]),
        type_frequencies=estimate([run['type_frequencies'] for run in runs]),
        empty_frequencies=estimate([run['empty_frequencies'] for run in runs]),
        first_attempt_success=estimate([run['first_attempt_success'] for run in runs]),
    )
    logger.info("[SIM] open queue reuse=%s: mean left behind %.4f, P(empty at departure) %.4f",
                options.reuse, result.mean_queue.point, result.departure_pmf.point[0])
    return result
