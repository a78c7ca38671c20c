#!/usr/bin/env python3
"""
Run record persistence.

Every subcommand produces one RunRecord: what was asked (config), what came
out (results), and when/how long (timestamp, timing). Records are validated
against schemas/run_record.schema.json before they are written, and written
atomically.

Reproducibility is judged on payload_digest(), which covers config and
results only, so reruns with the same seed compare equal even though their
timestamps and wall times differ.
"""

import glob
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from typing import Any, Dict

import jsonschema

import config
from output_helper import to_jsonable, read_json, write_json

logger = logging.getLogger(__name__)

_SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
_PACKAGE_DIR = os.path.join(_SCRIPT_DIR, 'deeppoly')


@lru_cache(maxsize=1)
def load_schema() -> dict:
    with open(config.SCHEMA_FILE, 'r') as f:
        return json.load(f)


@lru_cache(maxsize=1)
def tool_version_hash() -> str:
    """Short SHA-256 over the numerical package sources, in path order."""
    digest = hashlib.sha256()
    for path in sorted(glob.glob(os.path.join(_PACKAGE_DIR, '*.py'))):
        digest.update(os.path.basename(path).encode())
        with open(path, 'rb') as f:
            digest.update(f.read())
    return digest.hexdigest()[:12]


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


@dataclass
class RunRecord:
    subcommand: str
    config: Dict[str, Any]
    results: Dict[str, Any]
    schema_version: int = config.SCHEMA_VERSION
    timestamp: str = field(default_factory=_utc_now)
    tool_version: str = field(default_factory=tool_version_hash)
    timing: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return to_jsonable(asdict(self))

    def validate(self) -> None:
        """Raises jsonschema.ValidationError if the record does not match the schema."""
        jsonschema.validate(instance=self.to_dict(), schema=load_schema())

    def payload_digest(self) -> str:
        """SHA-256 of the canonical JSON of config and results."""
        payload = to_jsonable({'config': self.config, 'results': self.results})
        text = json.dumps(payload, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(text.encode()).hexdigest()

    def save(self, path: str) -> str:
        self.validate()
        return write_json(path, self.to_dict())

    @staticmethod
    def load(path: str) -> 'RunRecord':
        """Read and validate a record written by save()."""
        data = read_json(path)
        jsonschema.validate(instance=data, schema=load_schema())
        return RunRecord(**data)
