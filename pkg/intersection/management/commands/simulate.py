# intersection/management/commands/simulate.py
import numpy as np
import pandas as pd
from django.core.management.base import BaseCommand

from intersection.conf import app_setting
from intersection.simulation_service import simulate_queue, simulate_saturated
from intersection.utils import RunManifest, write_manifest, write_summary, write_table

from ._options import (
    add_config_arguments, add_simulation_arguments, analysis_errors, load_config, number_list, sim_options,
    with_minor_flow,
)


def _estimate_summary(est) -> dict:
    return {'point': est.point, 'std_error': est.std_error, 'ci_half_width': est.ci_half_width,
            'replications': est.replications}


class Command(BaseCommand):
    help = 'Runs the discrete-event simulator in saturated (capacity) or open (queue) mode'

    def add_arguments(self, parser):
        add_config_arguments(parser)
        add_simulation_arguments(parser)
        parser.add_argument('--mode', choices=['saturated', 'open'], default='saturated')
        parser.add_argument('--q-sweep', type=number_list, default=None,
                            help='Major-road flows in veh/h for saturated mode (default: the document\'s)')
        parser.add_argument('--minor-flow', type=float, default=None,
                            help='Minor-road demand lambda*E[B] in veh/h for open mode')

    def _saturated(self, config, opts, options):
        rows, summary = [], []
        for q in options['q_sweep'] or [config.major_flow]:
            variant = config.with_overrides(major_flow=q)
            result = simulate_saturated(variant, opts, n_jobs=options['jobs'])
            cap = result['capacity']
            self.stdout.write(f"q={q:7.1f} veh/h  C_sim={cap.point:8.2f} +- {cap.ci_half_width:.2f} veh/h "
                              f"({cap.replications} replications, reuse={opts.reuse})")
            for replication in range(cap.replications):
                rows.append({
                    'q_veh_per_hour': q,
                    'replication': replication,
                    'capacity_veh_per_hour': cap.values[replication],
                    'mean_service': result['mean_service'].values[replication],
                })
            summary.append({
                'q_veh_per_hour': q,
                'capacity': _estimate_summary(cap),
                'mean_service': _estimate_summary(result['mean_service']),
                'type_frequencies': result['type_frequencies'].point,
                'first_attempt_success': result['first_attempt_success'].point,
            })
        return pd.DataFrame(rows), {'mode': 'saturated', 'points': summary}

    def _open(self, config, opts, options):
        result = simulate_queue(config, opts, n_jobs=options['jobs'])
        self.stdout.write(f"mean queue at departure  = {result.mean_queue.point:.4f} +- "
                          f"{result.mean_queue.ci_half_width:.4f}")
        self.stdout.write(f"mean queue (time average) = {result.mean_arbitrary_queue.point:.4f} +- "
                          f"{result.mean_arbitrary_queue.ci_half_width:.4f}")
        self.stdout.write(f"mean service time         = {result.mean_service.point:.4f} s")
        self.stdout.write(f"P(empty at departure)     = {result.departure_pmf.point[0]:.4f}")
        departure = result.departure_pmf.values
        table = pd.DataFrame({
            'replication': np.arange(result.mean_queue.replications),
            'mean_queue': result.mean_queue.values,
            'mean_arbitrary_queue': result.mean_arbitrary_queue.values,
            'mean_service': result.mean_service.values,
            'empty_at_departure': departure[:, 0],
        })
        summary = {
            'mode': 'open',
            'minor_flow_veh_per_hour': config.arrival_rate * 3600.0,
            'mean_queue': _estimate_summary(result.mean_queue),
            'mean_arbitrary_queue': _estimate_summary(result.mean_arbitrary_queue),
            'mean_service': _estimate_summary(result.mean_service),
            'departure_pmf': result.departure_pmf.point,
            'arbitrary_pmf': result.arbitrary_pmf.point,
            'type_frequencies': result.type_frequencies.point,
            'empty_frequencies': result.empty_frequencies.point,
            'first_attempt_success': result.first_attempt_success.point,
        }
        return table, summary

    def handle(self, *args, **options):
        config = load_config(options['config'], attempts=options['attempts_override'],
                             default_attempts=app_setting('CAPACITY_ATTEMPTS' if options['mode'] == 'saturated'
                                                         else 'QUEUE_ATTEMPTS'))
        config = with_minor_flow(config, options['minor_flow'])
        opts = sim_options(options, options['mode'])

        with analysis_errors():
            if opts.mode == 'saturated':
                table, summary = self._saturated(config, opts, options)
            else:
                table, summary = self._open(config, opts, options)

        summary.update({'seed': opts.seed, 'reuse': opts.reuse, 'warmup': opts.warmup,
                        'horizon': opts.horizon, 'horizon_seconds': opts.horizon_seconds})
        path = write_table(table, options['out_dir'], 'simulation_replications.csv')
        summary_path = write_summary(summary, options['out_dir'], 'simulation_summary.json')
        write_manifest(RunManifest(
            command='simulate', config_path=options['config'], out_dir=options['out_dir'],
            overrides={'mode': opts.mode, 'reuse': opts.reuse, 'q_sweep': options['q_sweep'],
                       'minor_flow': options['minor_flow'], 'attempts': options['attempts_override']},
            seed=opts.seed,
            outputs=[path, summary_path],
        ))
        self.stdout.write(self.style.SUCCESS(f"[SIM] wrote {len(table)} replication rows to {path}"))
