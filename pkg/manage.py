#!/usr/bin/env python
"""
Command-line entry point for the gap-acceptance analyses.

    python manage.py validate intersection/scenarios/example1.yaml
    python manage.py capacity intersection/scenarios/example2.yaml --q-sweep 250,500,750,1000
    python manage.py queue intersection/scenarios/example1.yaml --minor-flow 240
    python manage.py service | simulate | compare ...
    python manage.py test intersection --exclude-tag slow
"""
import os
import sys


def main():
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'core.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django, which runs the analysis commands. Install the "
            "packages in requirements.txt into the active environment."
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
