# intersection/management/commands/service.py
import numpy as np
import pandas as pd
from django.core.management.base import BaseCommand

from intersection.analysis_service import solve
from intersection.conf import app_setting
from intersection.utils import RunManifest, write_manifest, write_table

from ._options import add_config_arguments, analysis_errors, load_config, number_list, with_minor_flow

DEFAULT_S_GRID = [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0]


class Command(BaseCommand):
    help = 'Reports the equilibrium service-time law: E[G], E[A] and per-type probabilities'

    def add_arguments(self, parser):
        add_config_arguments(parser)
        parser.add_argument('--minor-flow', type=float, default=None,
                            help='Minor-road demand lambda*E[B] in veh/h (default: the document\'s)')
        parser.add_argument('--saturated', action='store_true',
                            help='Use f(0) = 0 (queue never empties) instead of the solved queue')
        parser.add_argument('--out', default='service.csv', help='CSV file name inside --out-dir')
        parser.add_argument('--s-grid', type=number_list, default=None,
                            help="Real transform arguments (1/s) for service_lst.csv, e.g. '0,0.1,0.5'")

    def handle(self, *args, **options):
        default_attempts = app_setting('CAPACITY_ATTEMPTS' if options['saturated'] else 'QUEUE_ATTEMPTS')
        config = load_config(options['config'], attempts=options['attempts_override'],
                             default_attempts=default_attempts)
        config = with_minor_flow(config, options['minor_flow'])

        with analysis_errors():
            artifacts = solve(config, saturated=options['saturated'])
            law = artifacts.service_law
            mean_service = law.mean
            arrivals = law.arrivals_per_service()
            by_source = law.mean_given_source()
            s_grid = options['s_grid'] or DEFAULT_S_GRID
            samples = pd.DataFrame({'s': s_grid, 'lst': [law.transform(s).real for s in s_grid]})

        label = 'saturated' if artifacts.saturated else 'equilibrium'
        self.stdout.write(f"[{label}] E[G] = {mean_service:.6f} s   E[A] = {arrivals:.6f}   "
                          f"rho = {artifacts.stability.rho:.6f}   defect = {law.defect:.2e}")
        self.stdout.write(f"capacity 3600/g = {artifacts.capacity.capacity:.3f} veh/h")

        types = config.type_indices()
        table = pd.DataFrame({
            'flat': np.arange(1, config.n_types + 1),
            'attempt': [t.attempt for t in types],
            'gap': [t.gap for t in types],
            'profile': [t.profile for t in types],
            'success_probability': law.attempt_probs.success.reshape(-1),
            'served_probability': law.attempt_probs.served.reshape(-1),
            'type_probability': law.source_probs,
            'empty_ratio': law.empty_ratio,
            'empty_probability': law.f0,
            'mean_service_given_source': by_source,
        })

        path = write_table(table, options['out_dir'], options['out'])
        lst_path = write_table(samples, options['out_dir'], 'service_lst.csv')
        write_manifest(RunManifest(
            command='service', config_path=options['config'], out_dir=options['out_dir'],
            overrides={'minor_flow': options['minor_flow'], 'saturated': options['saturated'],
                       's_grid': options['s_grid'], 'attempts': options['attempts_override']},
            outputs=[path, lst_path],
        ))
        self.stdout.write(self.style.SUCCESS(f"[SERVICE] wrote {len(table)} rows to {path}"))
