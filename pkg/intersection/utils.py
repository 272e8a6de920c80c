# intersection/utils.py

"""
Output helpers for the management commands: CSV tables and the run manifest
written next to them.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from django.utils import timezone

from . import __version__

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.10g'
MANIFEST_NAME = 'manifest.json'


@dataclass
class RunManifest:
    command: str
    config_path: str
    out_dir: str
    overrides: dict = field(default_factory=dict)
    seed: int = None
    outputs: list = field(default_factory=list)
    tool_version: str = __version__
    timestamp: str = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=str)


def ensure_out_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_table(df: pd.DataFrame, out_dir: str, name: str) -> str:
    """Writes ``df`` as ``out_dir/name`` with a fixed float format and returns the path."""
    path = os.path.join(ensure_out_dir(out_dir), name)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info("[OUTPUT] wrote %d rows to %s", len(df), path)
    return path


def write_summary(summary: dict, out_dir: str, name: str) -> str:
    """Writes an aggregate summary as indented JSON; numpy values become lists or floats."""
    path = os.path.join(ensure_out_dir(out_dir), name)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(summary, handle, indent=2, sort_keys=True, default=_to_builtin)
    logger.info("[OUTPUT] wrote summary %s", path)
    return path


def _to_builtin(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return str(value)


def write_manifest(manifest: RunManifest) -> str:
    """
    Writes ``manifest.json`` into the manifest's output directory.

    :param manifest: RunManifest; ``timestamp`` is filled in if unset
    :return: Path of the written file
    """
    if manifest.timestamp is None:
        manifest.timestamp = timezone.now().isoformat()
    path = os.path.join(ensure_out_dir(manifest.out_dir), MANIFEST_NAME)
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(manifest.to_json())
    return path
