# intersection/scenario.py

"""
Scenario model: the immutable description of one unsignalized intersection.

A scenario holds a Poisson major-road stream, batch-Poisson minor-road arrivals,
and R driver profiles. Each profile has its own merge time and an N x M table of
critical gaps. Customer types are the triples (attempt i, gap index k, profile r)
and are addressed either as ``TypeIndex`` objects or by their flat index
``j = (i-1)MR + (k-1)R + r`` (1-based).

Documents use veh/h and batches/h; every computation uses per-second rates.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import yaml

from . import forms as scenario_forms
from .conf import app_setting
from .exceptions import ScenarioError

logger = logging.getLogger(__name__)

SECONDS_PER_HOUR = 3600.0
TAILS = ('truncated', 'saturating')


@dataclass(frozen=True)
class TypeIndex:
    attempt: int
    gap: int
    profile: int

    def __str__(self):
        return f"({self.attempt},{self.gap},{self.profile})"


def flatten(t: TypeIndex, attempts: int, gaps_per_attempt: int, profiles: int) -> int:
    """
    Maps a type triple to its 1-based flat index.

    :param t: Customer type (attempt, gap, profile), all 1-based
    :param attempts: N
    :param gaps_per_attempt: M
    :param profiles: R
    :return: (i-1)MR + (k-1)R + r
    """
    if not (1 <= t.attempt <= attempts and 1 <= t.gap <= gaps_per_attempt and 1 <= t.profile <= profiles):
        raise IndexError(f"type {t} out of range for N={attempts}, M={gaps_per_attempt}, R={profiles}")
    return (t.attempt - 1) * gaps_per_attempt * profiles + (t.gap - 1) * profiles + t.profile


def unflatten(j: int, attempts: int, gaps_per_attempt: int, profiles: int) -> TypeIndex:
    """Inverse of :func:`flatten`."""
    n_types = attempts * gaps_per_attempt * profiles
    if not 1 <= j <= n_types:
        raise IndexError(f"flat index {j} out of range 1..{n_types}")
    attempt0, rest = divmod(j - 1, gaps_per_attempt * profiles)
    gap0, profile0 = divmod(rest, profiles)
    return TypeIndex(attempt0 + 1, gap0 + 1, profile0 + 1)


@dataclass(frozen=True)
class BatchSizeLaw:
    """Distribution of the number of minor-road vehicles arriving together."""

    kind: str
    size: int = 1
    success_prob: float = 1.0
    pmf: tuple = ()

    @classmethod
    def deterministic(cls, size: int = 1) -> 'BatchSizeLaw':
        return cls(kind='deterministic', size=int(size))

    @classmethod
    def geometric(cls, success_prob: float) -> 'BatchSizeLaw':
        return cls(kind='geometric', success_prob=float(success_prob))

    @classmethod
    def explicit(cls, pmf) -> 'BatchSizeLaw':
        return cls(kind='explicit', pmf=tuple(float(p) for p in pmf))

    @property
    def mean(self) -> float:
        if self.kind == 'deterministic':
            return float(self.size)
        if self.kind == 'geometric':
            return 1.0 / self.success_prob
        return math.fsum(n * p for n, p in enumerate(self.pmf, start=1))

    def probability(self, n: int) -> float:
        """P(B = n)."""
        if n < 1:
            return 0.0
        if self.kind == 'deterministic':
            return 1.0 if n == self.size else 0.0
        if self.kind == 'geometric':
            return self.success_prob * (1.0 - self.success_prob) ** (n - 1)
        return self.pmf[n - 1] if n <= len(self.pmf) else 0.0

    def pgf(self, z):
        """B(z) = E[z^B]; accepts scalars or arrays."""
        if self.kind == 'deterministic':
            return z ** self.size
        if self.kind == 'geometric':
            p = self.success_prob
            return p * z / (1.0 - (1.0 - p) * z)
        return np.polynomial.polynomial.polyval(z, (0.0,) + self.pmf)

    def pgf_derivative(self, z):
        """B'(z)."""
        if self.kind == 'deterministic':
            return self.size * z ** (self.size - 1)
        if self.kind == 'geometric':
            p = self.success_prob
            return p / (1.0 - (1.0 - p) * z) ** 2
        coefficients = [n * p for n, p in enumerate(self.pmf, start=1)]
        return np.polynomial.polynomial.polyval(z, coefficients)

    def to_document(self) -> dict:
        if self.kind == 'deterministic':
            params = {'size': self.size}
        elif self.kind == 'geometric':
            params = {'success_prob': self.success_prob}
        else:
            params = {'pmf': list(self.pmf)}
        return {'kind': self.kind, 'params': params}


@dataclass(frozen=True)
class GapTable:
    """Critical gaps ``u[i][k]`` (seconds) and their probabilities ``p[i][k]``, one row per attempt."""

    u: tuple
    p: tuple

    @property
    def attempts(self) -> int:
        return len(self.u)

    @property
    def gaps_per_attempt(self) -> int:
        return len(self.u[0])

    def truncated(self, attempts: int) -> 'GapTable':
        return GapTable(u=self.u[:attempts], p=self.p[:attempts])


def generate_impatience_table(base_gaps, base_probs, alpha: float, merge_time: float, attempts: int) -> GapTable:
    """
    Builds a gap table in which drivers grow impatient: every failed attempt
    shrinks the critical gap towards the merge time,
    ``u[i+1][k] = alpha * (u[i][k] - merge_time) + merge_time``.

    :param base_gaps: First-attempt critical gaps (seconds), one per gap index
    :param base_probs: Gap-index probabilities, reused for every attempt
    :param alpha: Impatience factor in (0, 1]; 1 means no impatience
    :param merge_time: Merge time of the profile (seconds)
    :param attempts: Number of rows N
    :return: GapTable with N rows
    """
    if not 0.0 < alpha <= 1.0:
        raise ScenarioError(f"alpha must lie in (0, 1], got {alpha:g}")
    if attempts < 1:
        raise ScenarioError('attempts must be at least 1')
    rows = [tuple(float(u) for u in base_gaps)]
    for _ in range(attempts - 1):
        rows.append(tuple(alpha * (u - merge_time) + merge_time for u in rows[-1]))
    probs = tuple(float(p) for p in base_probs)
    return GapTable(u=tuple(rows), p=tuple(probs for _ in range(attempts)))


@dataclass(frozen=True)
class ImpatienceGenerator:
    base_gaps: tuple
    base_probs: tuple
    alpha: float

    def table(self, merge_time: float, attempts: int) -> GapTable:
        return generate_impatience_table(self.base_gaps, self.base_probs, self.alpha, merge_time, attempts)


@dataclass(frozen=True)
class DriverProfile:
    probability: float
    merge_time: float
    gaps: GapTable
    generator: ImpatienceGenerator = None

    def to_document(self) -> dict:
        if self.generator is not None:
            gaps = {'generator': {
                'base_gaps_s': list(self.generator.base_gaps),
                'base_probs': list(self.generator.base_probs),
                'alpha': self.generator.alpha,
            }}
        else:
            gaps = {'explicit': {'u': [list(row) for row in self.gaps.u], 'p': [list(row) for row in self.gaps.p]}}
        return {'probability': self.probability, 'merge_time_s': self.merge_time, 'gaps': gaps}


@dataclass(frozen=True)
class ScenarioConfig:
    """
    One fully specified intersection. Rates are stored in the document's
    per-hour units so that serialization is exact; the per-second values the
    analysis uses are exposed as ``major_rate`` and ``batch_rate``.
    """

    major_flow: float
    batch_flow: float
    batch_size: BatchSizeLaw
    profiles: tuple
    attempts: int
    gaps_per_attempt: int
    tail: str = 'truncated'

    @property
    def major_rate(self) -> float:
        """q in vehicles per second."""
        return self.major_flow / SECONDS_PER_HOUR

    @property
    def batch_rate(self) -> float:
        """lambda in batches per second."""
        return self.batch_flow / SECONDS_PER_HOUR

    @property
    def arrival_rate(self) -> float:
        """Minor-road vehicles per second, lambda * E[B]."""
        return self.batch_rate * self.batch_size.mean

    @property
    def n_profiles(self) -> int:
        return len(self.profiles)

    @property
    def n_types(self) -> int:
        return self.attempts * self.gaps_per_attempt * self.n_profiles

    @property
    def saturating(self) -> bool:
        return self.tail == 'saturating'

    @cached_property
    def gap_values(self) -> np.ndarray:
        """u as an (N, M, R) array."""
        values = np.array([profile.gaps.u for profile in self.profiles], dtype=float).transpose(1, 2, 0)
        values.flags.writeable = False
        return values

    @cached_property
    def gap_probs(self) -> np.ndarray:
        """p as an (N, M, R) array."""
        probs = np.array([profile.gaps.p for profile in self.profiles], dtype=float).transpose(1, 2, 0)
        probs.flags.writeable = False
        return probs

    @cached_property
    def profile_probs(self) -> np.ndarray:
        probs = np.array([profile.probability for profile in self.profiles], dtype=float)
        probs.flags.writeable = False
        return probs

    @cached_property
    def merge_times(self) -> np.ndarray:
        times = np.array([profile.merge_time for profile in self.profiles], dtype=float)
        times.flags.writeable = False
        return times

    @cached_property
    def lags(self) -> np.ndarray:
        """Residual gap u - Delta left to a successor, as an (N, M, R) array."""
        lags = self.gap_values - self.merge_times[None, None, :]
        lags.flags.writeable = False
        return lags

    @cached_property
    def type_probs(self) -> np.ndarray:
        """p_r * p_(i,k,r) as an (N, M, R) array."""
        weights = self.gap_probs * self.profile_probs[None, None, :]
        weights.flags.writeable = False
        return weights

    def flatten(self, t: TypeIndex) -> int:
        return flatten(t, self.attempts, self.gaps_per_attempt, self.n_profiles)

    def unflatten(self, j: int) -> TypeIndex:
        return unflatten(j, self.attempts, self.gaps_per_attempt, self.n_profiles)

    def type_indices(self) -> list:
        """All customer types in flat order."""
        return [self.unflatten(j) for j in range(1, self.n_types + 1)]

    def with_overrides(self, major_flow=None, batch_flow=None, batch_size=None, attempts=None,
                       alpha=None, merge_times=None, tail=None) -> 'ScenarioConfig':
        """
        Returns a copy with some parameters replaced. Generator-built gap
        tables are regenerated; explicit tables can only be shortened.

        :param major_flow: Major-road flow (veh/h)
        :param batch_flow: Minor-road batch rate (batches/h)
        :param batch_size: Replacement BatchSizeLaw
        :param attempts: Number of modeled attempts N
        :param alpha: Impatience factor applied to generator-built profiles
        :param merge_times: One merge time (seconds) per profile
        :param tail: 'truncated' or 'saturating'
        :return: New ScenarioConfig
        """
        attempts = self.attempts if attempts is None else int(attempts)
        tail = self.tail if tail is None else tail
        if tail not in TAILS:
            raise ScenarioError(f"tail must be one of {TAILS}, got '{tail}'")
        if tail == 'saturating' and attempts < 2:
            raise ScenarioError('a saturating tail needs at least 2 attempts')
        if merge_times is not None and len(merge_times) != self.n_profiles:
            raise ScenarioError(f"expected {self.n_profiles} merge times, got {len(merge_times)}")

        profiles = []
        for r, profile in enumerate(self.profiles):
            merge_time = profile.merge_time if merge_times is None else float(merge_times[r])
            generator = profile.generator
            if generator is not None:
                if alpha is not None:
                    generator = dataclasses.replace(generator, alpha=float(alpha))
                if min(generator.base_gaps) <= merge_time:
                    raise ScenarioError(f"profiles[{r}]: critical gap ≤ merge time {merge_time:g}")
                gaps = generator.table(merge_time, attempts)
            else:
                if attempts > profile.gaps.attempts:
                    raise ScenarioError(
                        f"profiles[{r}]: explicit gap table has {profile.gaps.attempts} rows, "
                        f"cannot extend to {attempts} attempts"
                    )
                gaps = profile.gaps.truncated(attempts)
                if min(min(row) for row in gaps.u) <= merge_time:
                    raise ScenarioError(f"profiles[{r}]: critical gap ≤ merge time {merge_time:g}")
            profiles.append(DriverProfile(profile.probability, merge_time, gaps, generator))

        return dataclasses.replace(
            self,
            major_flow=self.major_flow if major_flow is None else float(major_flow),
            batch_flow=self.batch_flow if batch_flow is None else float(batch_flow),
            batch_size=self.batch_size if batch_size is None else batch_size,
            profiles=tuple(profiles),
            attempts=attempts,
            tail=tail,
        )

    def to_document(self) -> dict:
        return {
            'major': {'flow_veh_per_hour': self.major_flow},
            'minor': {'batch_rate_per_hour': self.batch_flow, 'batch_size': self.batch_size.to_document()},
            'attempts': self.attempts,
            'gaps_per_attempt': self.gaps_per_attempt,
            'tail': self.tail,
            'profiles': [profile.to_document() for profile in self.profiles],
        }


@dataclass(frozen=True)
class LimitedReuseReport:
    holds: bool
    violations: tuple

    def summary(self) -> str:
        if self.holds:
            return 'condition (13): HOLDS (analysis exact)'
        return 'condition (13): VIOLATED (analysis is a lower-bound approximation)'


def check_limited_reuse(config: ScenarioConfig) -> LimitedReuseReport:
    """
    Checks that no driver's first-attempt gap is shorter than a lag their
    predecessor can leave, i.e. u_(1,l,r1) >= u_(i,k,r0) - Delta_r0 for every
    pair. When it holds a lag is never shared by two successors and the
    analysis is exact.

    :param config: Scenario
    :return: LimitedReuseReport listing every violating (first-attempt, source) pair
    """
    first = config.gap_values[0].reshape(-1)
    lags = config.lags.reshape(-1)
    tolerance = app_setting('PROBABILITY_TOLERANCE')
    bad_first, bad_source = np.nonzero(first[:, None] < lags[None, :] - tolerance)

    M, R = config.gaps_per_attempt, config.n_profiles
    violations = tuple(
        (TypeIndex(1, int(f) // R + 1, int(f) % R + 1), config.unflatten(int(s) + 1))
        for f, s in zip(bad_first, bad_source)
    )
    if violations:
        logger.info("[MODEL] limited gap reuse violated by %d pairs (first: %s vs %s)",
                    len(violations), violations[0][0], violations[0][1])
    return LimitedReuseReport(holds=not violations, violations=violations)


def _validate(form_class, data, path, errors, **kwargs):
    form = form_class(data, path, **kwargs)
    if form.is_valid():
        return form.cleaned_data
    errors.extend(form.keyed_errors())
    return None


def _parse_profile(doc, path, gaps_per_attempt, errors):
    profile = _validate(scenario_forms.ProfileForm, doc, path, errors)
    if profile is None:
        return None
    merge_time = profile['merge_time_s']
    gaps_path = scenario_forms.join_path(path, 'gaps')
    if _validate(scenario_forms.GapsForm, doc.get('gaps'), gaps_path, errors) is None:
        return None

    gaps_doc = doc['gaps']
    if 'explicit' in gaps_doc:
        table = _validate(scenario_forms.ExplicitGapsForm, gaps_doc['explicit'],
                          scenario_forms.join_path(gaps_path, 'explicit'), errors, merge_time=merge_time)
        if table is None:
            return None
        width = len(table['u'][0])
        if gaps_per_attempt is not None and width != gaps_per_attempt:
            errors.append(f"{gaps_path}.explicit.u: rows have {width} gaps but gaps_per_attempt is {gaps_per_attempt}")
            return None
        gaps = GapTable(u=tuple(tuple(row) for row in table['u']), p=tuple(tuple(row) for row in table['p']))
        return profile['probability'], merge_time, gaps, None

    generator_doc = _validate(scenario_forms.GeneratorForm, gaps_doc['generator'],
                              scenario_forms.join_path(gaps_path, 'generator'), errors, merge_time=merge_time)
    if generator_doc is None:
        return None
    width = len(generator_doc['base_gaps_s'])
    if gaps_per_attempt is not None and width != gaps_per_attempt:
        errors.append(f"{gaps_path}.generator.base_gaps_s: {width} gaps but gaps_per_attempt is {gaps_per_attempt}")
        return None
    generator = ImpatienceGenerator(
        base_gaps=tuple(generator_doc['base_gaps_s']),
        base_probs=tuple(generator_doc['base_probs']),
        alpha=generator_doc['alpha'],
    )
    return profile['probability'], merge_time, None, generator


def parse_config(text: str, attempts: int = None, default_attempts: int = None) -> ScenarioConfig:
    """
    Parses and validates a YAML scenario document.

    The number of attempts N is resolved as: the ``attempts`` argument (an
    override), the document's ``attempts`` key, the row count of explicit gap
    tables, and finally ``default_attempts`` (``CAPACITY_ATTEMPTS`` if None).

    :param text: Document text (YAML or JSON)
    :param attempts: Optional override for N
    :param default_attempts: N used when neither the override nor the document fixes it
    :return: Validated ScenarioConfig
    :raises ScenarioError: with one key-path message per problem
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"document is not valid YAML: {exc}")

    errors = []
    top = _validate(scenario_forms.ScenarioForm, doc, '', errors)
    if not isinstance(doc, dict):
        raise ScenarioError(errors)

    major = _validate(scenario_forms.MajorRoadForm, doc.get('major'), 'major', errors) if 'major' in doc else None
    minor = _validate(scenario_forms.MinorRoadForm, doc.get('minor'), 'minor', errors) if 'minor' in doc else None

    # single vehicles unless the document says otherwise
    batch_size = BatchSizeLaw.deterministic(1)
    if minor is not None and 'batch_size' in doc['minor']:
        batch_size = None
        batch_doc = doc['minor']['batch_size']
        kind = _validate(scenario_forms.BatchSizeForm, batch_doc, 'minor.batch_size', errors)
        if kind is not None:
            params = _validate(scenario_forms.BATCH_PARAM_FORMS[kind['kind']], batch_doc.get('params'),
                               'minor.batch_size.params', errors)
            if params is not None:
                if kind['kind'] == 'deterministic':
                    batch_size = BatchSizeLaw.deterministic(params['size'])
                elif kind['kind'] == 'geometric':
                    batch_size = BatchSizeLaw.geometric(params['success_prob'])
                else:
                    batch_size = BatchSizeLaw.explicit(params['pmf'])

    gaps_per_attempt = top['gaps_per_attempt'] if top else None
    parsed_profiles = []
    profile_docs = doc.get('profiles') if isinstance(doc.get('profiles'), list) else []
    for r, profile_doc in enumerate(profile_docs):
        parsed_profiles.append(_parse_profile(profile_doc, f"profiles[{r}]", gaps_per_attempt, errors))

    if parsed_profiles and all(p is not None for p in parsed_profiles):
        total = math.fsum(p[0] for p in parsed_profiles)
        if abs(total - 1.0) > app_setting('PROBABILITY_TOLERANCE'):
            errors.append(f"profiles: profile probabilities sum to {total:.12g}, expected 1")

    if errors or top is None:
        raise ScenarioError(errors)

    explicit_rows = {p[2].attempts for p in parsed_profiles if p[2] is not None}
    if len(explicit_rows) > 1:
        raise ScenarioError(f"profiles: explicit gap tables disagree on the number of attempts {sorted(explicit_rows)}")
    if top['attempts'] is not None and explicit_rows and explicit_rows != {top['attempts']}:
        raise ScenarioError(f"attempts: {top['attempts']} but explicit gap tables have {explicit_rows.pop()} rows")

    if attempts is not None:
        n_attempts = int(attempts)
    elif top['attempts'] is not None:
        n_attempts = top['attempts']
    elif explicit_rows:
        n_attempts = next(iter(explicit_rows))
    else:
        n_attempts = default_attempts or app_setting('CAPACITY_ATTEMPTS')

    if n_attempts < 1:
        raise ScenarioError('attempts: must be at least 1')
    if top['tail'] == 'saturating' and n_attempts < 2:
        raise ScenarioError('tail: a saturating tail needs at least 2 attempts')

    profiles = []
    for r, (probability, merge_time, gaps, generator) in enumerate(parsed_profiles):
        if generator is not None:
            gaps = generator.table(merge_time, n_attempts)
        elif gaps.attempts < n_attempts:
            raise ScenarioError(f"profiles[{r}].gaps.explicit.u: {gaps.attempts} rows, {n_attempts} attempts requested")
        else:
            gaps = gaps.truncated(n_attempts)
        profiles.append(DriverProfile(probability, merge_time, gaps, generator))

    config = ScenarioConfig(
        major_flow=major['flow_veh_per_hour'],
        batch_flow=minor['batch_rate_per_hour'],
        batch_size=batch_size,
        profiles=tuple(profiles),
        attempts=n_attempts,
        gaps_per_attempt=gaps_per_attempt,
        tail=top['tail'],
    )
    logger.debug("[MODEL] parsed scenario: R=%d N=%d M=%d types=%d tail=%s",
                 config.n_profiles, config.attempts, config.gaps_per_attempt, config.n_types, config.tail)
    return config


def serialize_config(config: ScenarioConfig) -> str:
    """Writes a scenario back to YAML; ``parse_config`` of the result equals ``config``."""
    return yaml.safe_dump(config.to_document(), sort_keys=False)
