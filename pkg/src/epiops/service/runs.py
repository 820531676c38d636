"""Content-addressed, file-based run persistence.

A run_id is a digest of (kind, input digest, config digest); resubmitting
identical inputs returns the cached record instead of recomputing. A run
directory is claimed with an atomic mkdir, so there is exactly one writer
per run_id.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional


def digest(obj) -> str:
    """Stable digest of a JSON-serializable object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunRecord:
    run_id: str
    kind: str
    inputs_digest: str
    created_at: str
    artifacts: dict  # name -> relative file name

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class RunStore:
    def __init__(self, data_dir: Path):
        self.root = Path(data_dir) / "runs"
        self.root.mkdir(parents=True, exist_ok=True)

    def run_id(self, kind: str, inputs_digest: str) -> str:
        return digest({"kind": kind, "inputs": inputs_digest})[:16]

    def get(self, run_id: str) -> Optional[RunRecord]:
        record_path = self.root / run_id / "record.json"
        if not record_path.exists():
            return None
        return RunRecord(**json.loads(record_path.read_text()))

    def read_artifact(self, run_id: str, name: str) -> str:
        rec = self.get(run_id)
        if rec is None or name not in rec.artifacts:
            raise KeyError(f"no artifact {name} in run {run_id}")
        return (self.root / run_id / rec.artifacts[name]).read_text()

    def get_or_create(self, kind: str, inputs_digest: str,
                      compute: Callable[[], dict]) -> tuple:
        """Return (record, cached). ``compute`` must return a mapping of
        artifact name -> text content; it runs only on a cache miss."""
        run_id = self.run_id(kind, inputs_digest)
        run_dir = self.root / run_id
        existing = self.get(run_id)
        if existing is not None:
            return existing, True
        staging = Path(tempfile.mkdtemp(dir=self.root, prefix=".staging-"))
        try:
            artifacts = compute()
            names = {}
            for name, content in artifacts.items():
                fname = name if "." in name else name + ".json"
                (staging / fname).write_text(content)
                names[name] = fname
            record = RunRecord(
                run_id=run_id, kind=kind, inputs_digest=inputs_digest,
                created_at=datetime.now(timezone.utc).isoformat(),
                artifacts=names)
            (staging / "record.json").write_text(
                json.dumps(record.to_dict(), indent=2))
            try:
                os.rename(staging, run_dir)  # atomic claim of the run_id
            except OSError:
                existing = self.get(run_id)
                if existing is not None:
                    return existing, True  # lost the race; use the winner's
                raise
            return record, False
        finally:
            if staging.exists():
                import shutil
                shutil.rmtree(staging, ignore_errors=True)
