"""
Validation forms for scenario documents.

A scenario document is a nested mapping (YAML). Each mapping section is checked
by one form; nested sections are checked by their own form and every error is
reported with the key path that produced it, e.g.
``profiles[1].gaps.generator.alpha: alpha must lie in (0, 1]``.
"""
import math

from django import forms
from django.core.exceptions import NON_FIELD_ERRORS
from django.forms.utils import ErrorDict

from .conf import app_setting


def join_path(path: str, key: str) -> str:
    if not path:
        return key
    if key.startswith('['):
        return f"{path}{key}"
    return f"{path}.{key}"


def _as_number(item, where: str) -> float:
    if isinstance(item, bool) or not isinstance(item, (int, float)):
        raise forms.ValidationError(f"{where}: expected a number, got {item!r}", code='invalid')
    if not math.isfinite(item):
        raise forms.ValidationError(f"{where}: must be finite", code='invalid')
    return float(item)


class NumberListField(forms.Field):
    """A YAML sequence of finite numbers."""

    def to_python(self, value):
        if value in self.empty_values:
            return []
        if not isinstance(value, (list, tuple)):
            raise forms.ValidationError('expected a list of numbers', code='invalid')
        return [_as_number(item, f"[{idx}]") for idx, item in enumerate(value)]


class NumberMatrixField(forms.Field):
    """A YAML sequence of equally long number sequences (one row per attempt)."""

    def to_python(self, value):
        if value in self.empty_values:
            return []
        if not isinstance(value, (list, tuple)):
            raise forms.ValidationError('expected a list of rows', code='invalid')
        rows = []
        for i, row in enumerate(value):
            if not isinstance(row, (list, tuple)) or not row:
                raise forms.ValidationError(f"[{i}]: expected a non-empty list of numbers", code='invalid')
            rows.append([_as_number(item, f"[{i}][{k}]") for k, item in enumerate(row)])
        if len({len(row) for row in rows}) > 1:
            raise forms.ValidationError('rows must all have the same length', code='ragged')
        return rows


def check_probability_vector(values, where: str = '') -> None:
    tolerance = app_setting('PROBABILITY_TOLERANCE')
    prefix = f"{where}: " if where else ''
    for idx, value in enumerate(values):
        if value < 0:
            raise forms.ValidationError(f"{prefix}[{idx}]: probability {value:g} is negative")
    total = math.fsum(values)
    if abs(total - 1.0) > tolerance:
        raise forms.ValidationError(f"{prefix}probabilities sum to {total:.12g}, expected 1")


class DocumentForm(forms.Form):
    """
    Base form for one mapping section of a scenario document.

    Keys listed in ``nested`` are sub-sections validated by other forms; any
    other key that is not a field is rejected.
    """

    nested = ()

    def __init__(self, data, path: str = '', **kwargs):
        self.path = path
        self.is_mapping = isinstance(data, dict)
        super().__init__(data=data if self.is_mapping else {}, **kwargs)

    def full_clean(self):
        if not self.is_mapping:
            self._errors = ErrorDict()
            self.cleaned_data = {}
            self.add_error(None, 'expected a mapping')
            return
        super().full_clean()
        for key in sorted(set(self.data) - set(self.fields) - set(self.nested), key=str):
            self.add_error(None, f"unknown key '{key}'")

    def keyed_errors(self) -> list:
        """
        Flattens ``self.errors`` into ``"key.path: message"`` strings.

        :return: List of messages, empty when the section is valid
        """
        messages = []
        for field, field_errors in self.errors.items():
            where = self.path if field == NON_FIELD_ERRORS else join_path(self.path, field)
            for message in field_errors:
                messages.append(f"{where or '<document>'}: {message}")
        return messages


class ScenarioForm(DocumentForm):
    TAIL_CHOICES = [
        ('truncated', 'Truncated after N attempts'),
        ('saturating', 'Attempts beyond N reuse the attempt-N gap law'),
    ]

    nested = ('major', 'minor', 'profiles')

    attempts = forms.IntegerField(required=False, min_value=1)
    gaps_per_attempt = forms.IntegerField(min_value=1)
    tail = forms.ChoiceField(required=False, choices=TAIL_CHOICES)

    def clean_tail(self):
        return self.cleaned_data.get('tail') or 'truncated'

    def clean(self):
        cleaned_data = super().clean()
        for key in ('major', 'minor'):
            if key not in self.data:
                self.add_error(None, f"missing key '{key}'")
        profiles = self.data.get('profiles')
        if not isinstance(profiles, list) or not profiles:
            self.add_error(None, "'profiles' must be a non-empty list")
        if cleaned_data.get('tail') == 'saturating' and cleaned_data.get('attempts') == 1:
            self.add_error('tail', 'a saturating tail needs at least 2 attempts')
        return cleaned_data


class MajorRoadForm(DocumentForm):
    flow_veh_per_hour = forms.FloatField(min_value=0)


class MinorRoadForm(DocumentForm):
    nested = ('batch_size',)

    batch_rate_per_hour = forms.FloatField(min_value=0)


class BatchSizeForm(DocumentForm):
    KIND_CHOICES = [
        ('deterministic', 'Every batch has the same size'),
        ('geometric', 'Geometric on {1, 2, ...}'),
        ('explicit', 'Explicit pmf on {1, ..., K}'),
    ]

    nested = ('params',)

    kind = forms.ChoiceField(choices=KIND_CHOICES)


class DeterministicBatchForm(DocumentForm):
    size = forms.IntegerField(min_value=1)


class GeometricBatchForm(DocumentForm):
    success_prob = forms.FloatField()

    def clean_success_prob(self):
        value = self.cleaned_data['success_prob']
        if not 0.0 < value <= 1.0:
            raise forms.ValidationError('success probability must lie in (0, 1]')
        return value


class ExplicitBatchForm(DocumentForm):
    pmf = NumberListField(help_text='P(B=1), P(B=2), ..., P(B=K)')

    def clean_pmf(self):
        pmf = self.cleaned_data['pmf']
        check_probability_vector(pmf)
        return pmf


BATCH_PARAM_FORMS = {
    'deterministic': DeterministicBatchForm,
    'geometric': GeometricBatchForm,
    'explicit': ExplicitBatchForm,
}


class ProfileForm(DocumentForm):
    nested = ('gaps',)

    probability = forms.FloatField()
    merge_time_s = forms.FloatField()

    def clean_probability(self):
        value = self.cleaned_data['probability']
        if not 0.0 < value <= 1.0:
            raise forms.ValidationError('profile probability must lie in (0, 1]')
        return value

    def clean_merge_time_s(self):
        value = self.cleaned_data['merge_time_s']
        if value <= 0:
            raise forms.ValidationError('merge time must be positive')
        return value


class GapsForm(DocumentForm):
    nested = ('explicit', 'generator')

    def clean(self):
        cleaned_data = super().clean()
        present = [key for key in self.nested if key in self.data]
        if len(present) != 1:
            self.add_error(None, "exactly one of 'explicit' or 'generator' is required")
        return cleaned_data


class ExplicitGapsForm(DocumentForm):
    """Full N x M tables of critical gaps ``u`` (seconds) and their probabilities ``p``."""

    u = NumberMatrixField()
    p = NumberMatrixField()

    def __init__(self, data, path: str = '', merge_time: float = None, **kwargs):
        self.merge_time = merge_time
        super().__init__(data, path, **kwargs)

    def clean_u(self):
        gaps = self.cleaned_data['u']
        for i, row in enumerate(gaps):
            for k, value in enumerate(row):
                if value <= 0:
                    raise forms.ValidationError(f"[{i}][{k}]: critical gap must be positive")
                if self.merge_time is not None and value <= self.merge_time:
                    raise forms.ValidationError(
                        f"[{i}][{k}]: critical gap {value:g} ≤ merge time {self.merge_time:g}"
                    )
        return gaps

    def clean_p(self):
        probs = self.cleaned_data['p']
        for i, row in enumerate(probs):
            check_probability_vector(row, f"[{i}]")
        return probs

    def clean(self):
        cleaned_data = super().clean()
        gaps, probs = cleaned_data.get('u'), cleaned_data.get('p')
        if gaps and probs and (len(gaps) != len(probs) or len(gaps[0]) != len(probs[0])):
            self.add_error(None, 'u and p must have the same shape')
        return cleaned_data


class GeneratorForm(DocumentForm):
    """First-attempt gaps plus the impatience factor alpha; later attempts are derived."""

    base_gaps_s = NumberListField()
    base_probs = NumberListField()
    alpha = forms.FloatField()

    def __init__(self, data, path: str = '', merge_time: float = None, **kwargs):
        self.merge_time = merge_time
        super().__init__(data, path, **kwargs)

    def clean_alpha(self):
        value = self.cleaned_data['alpha']
        if not 0.0 < value <= 1.0:
            raise forms.ValidationError('alpha must lie in (0, 1]')
        return value

    def clean_base_gaps_s(self):
        gaps = self.cleaned_data['base_gaps_s']
        for k, value in enumerate(gaps):
            if self.merge_time is not None and value <= self.merge_time:
                raise forms.ValidationError(f"[{k}]: critical gap {value:g} ≤ merge time {self.merge_time:g}")
        return gaps

    def clean_base_probs(self):
        probs = self.cleaned_data['base_probs']
        check_probability_vector(probs)
        return probs

    def clean(self):
        cleaned_data = super().clean()
        gaps, probs = cleaned_data.get('base_gaps_s'), cleaned_data.get('base_probs')
        if gaps and probs and len(gaps) != len(probs):
            self.add_error(None, 'base_gaps_s and base_probs must have the same length')
        return cleaned_data
