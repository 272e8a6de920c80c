# intersection/management/commands/queue.py
import numpy as np
import pandas as pd
from django.core.management.base import BaseCommand

from intersection.analysis_service import solve
from intersection.conf import app_setting
from intersection.queue_service import mean_queue_length, queue_pmf
from intersection.utils import RunManifest, write_manifest, write_table

from ._options import add_config_arguments, analysis_errors, load_config, with_minor_flow

# Adaptive n_max stops once this much mass is recovered.
MASS_TARGET = 1.0 - 1e-6
MAX_NMAX = 4096


class Command(BaseCommand):
    help = 'Solves the stationary queue length at departure and arbitrary epochs'

    def add_arguments(self, parser):
        add_config_arguments(parser)
        parser.add_argument('--minor-flow', type=float, default=None,
                            help='Minor-road demand lambda*E[B] in veh/h (default: the document\'s)')
        parser.add_argument('--nmax', type=int, default=None, help='Largest queue length (default: adaptive)')
        parser.add_argument('--epoch', choices=['departure', 'arbitrary', 'both'], default='both')
        parser.add_argument('--out', default='queue_pmf.csv', help='CSV file name inside --out-dir')

    def _pmf(self, config, epoch, n_max, n_jobs):
        if n_max is not None:
            return queue_pmf(config, n_max, epoch=epoch, n_jobs=n_jobs)
        n_max = 64
        while True:
            pmf = queue_pmf(config, n_max, epoch=epoch, n_jobs=n_jobs)
            if pmf.sum() >= MASS_TARGET or n_max >= MAX_NMAX:
                return pmf
            n_max *= 2

    def handle(self, *args, **options):
        config = load_config(options['config'], attempts=options['attempts_override'],
                             default_attempts=app_setting('QUEUE_ATTEMPTS'))
        config = with_minor_flow(config, options['minor_flow'])
        epochs = ['departure', 'arbitrary'] if options['epoch'] == 'both' else [options['epoch']]

        frames = []
        with analysis_errors():
            artifacts = solve(config)
            self.stdout.write(f"rho={artifacts.stability.rho:.6f}  capacity={artifacts.capacity.capacity:.3f} veh/h  "
                              f"demand={config.arrival_rate * 3600.0:.3f} veh/h")
            self.stdout.write(f"f0 mass (P(departure leaves queue empty)) = {artifacts.empty_probs.sum():.8f}")
            for epoch in epochs:
                pmf = self._pmf(config, epoch, options['nmax'], options['jobs'])
                mean = mean_queue_length(config, epoch=epoch)
                pmf_mean = float(np.arange(pmf.size) @ pmf)
                self.stdout.write(f"[{epoch}] mean queue={mean:.8f}  pmf mean={pmf_mean:.8f}  "
                                  f"mass={pmf.sum():.10f} on 0..{pmf.size - 1}")
                frames.append(pd.DataFrame({'n': np.arange(pmf.size), 'probability': pmf, 'epoch': epoch}))

        table = pd.concat(frames, ignore_index=True)
        path = write_table(table, options['out_dir'], options['out'])
        write_manifest(RunManifest(
            command='queue', config_path=options['config'], out_dir=options['out_dir'],
            overrides={'minor_flow': options['minor_flow'], 'nmax': options['nmax'], 'epoch': options['epoch'],
                       'attempts': options['attempts_override']},
            outputs=[path],
        ))
        self.stdout.write(self.style.SUCCESS(f"[QUEUE] wrote {len(table)} rows to {path}"))
