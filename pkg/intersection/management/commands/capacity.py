# intersection/management/commands/capacity.py
import pandas as pd
from django.core.management.base import BaseCommand

from intersection.capacity_service import capacity_table
from intersection.conf import app_setting
from intersection.scenario import check_limited_reuse
from intersection.utils import RunManifest, write_manifest, write_table

from ._options import add_config_arguments, analysis_errors, load_config, number_list


class Command(BaseCommand):
    help = 'Computes minor-road capacity over a sweep of major-road flows'

    def add_arguments(self, parser):
        add_config_arguments(parser)
        parser.add_argument('--q-sweep', type=number_list, default=None,
                            help="Major-road flows in veh/h, e.g. '250,500,750,1000' (default: the document's)")
        parser.add_argument('--alpha', type=float, nargs='+', default=None,
                            help='Impatience factors; one curve per value')
        parser.add_argument('--merge-times', type=number_list, nargs='+', default=None,
                            help="Merge-time vectors, e.g. '4,5' '4,6'; one curve per vector")
        parser.add_argument('--out', default='capacity.csv', help='CSV file name inside --out-dir')

    def handle(self, *args, **options):
        config = load_config(options['config'], attempts=options['attempts_override'],
                             default_attempts=app_setting('CAPACITY_ATTEMPTS'))
        flows = options['q_sweep'] or [config.major_flow]

        with analysis_errors():
            table = capacity_table(config, flows, alphas=options['alpha'],
                                   merge_time_sets=options['merge_times'], n_jobs=options['jobs'])

        for row in table.itertuples(index=False):
            label = '' if pd.isna(row.alpha) else f"alpha={row.alpha:g} "
            self.stdout.write(f"{label}Delta=({row.merge_times}) q={row.q_veh_per_hour:7.1f} veh/h  "
                              f"C={row.capacity_veh_per_hour:8.3f} veh/h  defect={row.defect:.1e}")
        report = check_limited_reuse(config)
        self.stdout.write((self.style.SUCCESS if report.holds else self.style.WARNING)(report.summary()))

        path = write_table(table, options['out_dir'], options['out'])
        write_manifest(RunManifest(
            command='capacity', config_path=options['config'], out_dir=options['out_dir'],
            overrides={'q_sweep': flows, 'alpha': options['alpha'], 'merge_times': options['merge_times'],
                       'attempts': options['attempts_override']},
            outputs=[path],
        ))
        self.stdout.write(self.style.SUCCESS(f"[CAPACITY] wrote {len(table)} rows to {path}"))
