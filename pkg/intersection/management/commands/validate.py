# intersection/management/commands/validate.py
from django.core.management.base import BaseCommand

from intersection.capacity_service import truncation_defect
from intersection.conf import app_setting
from intersection.scenario import check_limited_reuse, serialize_config

from ._options import analysis_errors, load_config

MAX_LISTED_VIOLATIONS = 5


class Command(BaseCommand):
    help = 'Validates a scenario document and reports limited gap reuse and the truncation defect'

    def add_arguments(self, parser):
        parser.add_argument('config', help='Scenario document (YAML or JSON)')
        parser.add_argument('--attempts-override', type=int, default=None)
        parser.add_argument('--print-config', action='store_true', help='Echo the expanded document')

    def handle(self, *args, **options):
        config = load_config(options['config'], attempts=options['attempts_override'],
                             default_attempts=app_setting('CAPACITY_ATTEMPTS'))
        self.stdout.write(self.style.SUCCESS(
            f"[VALIDATE] {options['config']}: valid (R={config.n_profiles}, N={config.attempts}, "
            f"M={config.gaps_per_attempt}, types={config.n_types}, tail={config.tail})"
        ))
        self.stdout.write(f"  major flow  : {config.major_flow:g} veh/h")
        self.stdout.write(f"  minor demand: {config.arrival_rate * 3600.0:g} veh/h "
                          f"({config.batch_flow:g} batches/h, E[B]={config.batch_size.mean:g})")

        report = check_limited_reuse(config)
        style = self.style.SUCCESS if report.holds else self.style.WARNING
        self.stdout.write(style(report.summary()))
        for first, source in report.violations[:MAX_LISTED_VIOLATIONS]:
            self.stdout.write(f"  first attempt {first} gap is shorter than the lag of {source}")
        if len(report.violations) > MAX_LISTED_VIOLATIONS:
            self.stdout.write(f"  ... {len(report.violations) - MAX_LISTED_VIOLATIONS} more pairs")

        with analysis_errors():
            defect = truncation_defect(config)
        self.stdout.write(f"defect at N={config.attempts}: {defect:.3e}")
        if defect > app_setting('DEFECT_ERROR'):
            self.stdout.write(self.style.WARNING(
                f"  defect exceeds DEFECT_ERROR={app_setting('DEFECT_ERROR'):.0e}: capacity and queue runs at this N "
                f"will stop; increase attempts or use tail: saturating"
            ))

        if options['print_config']:
            self.stdout.write(serialize_config(config))
