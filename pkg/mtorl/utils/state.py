# mtorl/utils/state.py
from pathlib import Path
import json
from datetime import datetime, timezone
from typing import Dict, Iterable, Optional

from mtorl.utils.fs import hash_file


class RunMetadata:
    """
    Manages <out>/run_meta.json for a single command invocation.

    This is the only artefact that carries wall-clock timestamps, so every
    other output of a run stays byte-identical across invocations.
    """

    def __init__(self, out_dir: Path, command: str):
        self.out_dir = Path(out_dir)
        self.meta_path = self.out_dir / "run_meta.json"
        self.state = self._default_state(command)

    def _default_state(self, command: str) -> dict:
        from mtorl import __version__

        return {
            "version": __version__,
            "command": command,
            "started_at": datetime.now(timezone.utc).isoformat(),
            "finished_at": None,
            "config_hash": None,
            "seed": None,
            "outputs": {},  # {filename: sha256}
            "metadata": {},
        }

    def save(self):
        """Save metadata to disk"""
        self.meta_path.write_text(
            json.dumps(self.state, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    def update_config(self, config_hash: str, seed: Optional[int]):
        self.state["config_hash"] = config_hash
        self.state["seed"] = seed

    def record_outputs(self, files: Iterable[Path]):
        """Hash the produced files so two runs can be compared quickly."""
        outputs: Dict[str, str] = self.state.setdefault("outputs", {})
        for path in files:
            path = Path(path)
            if path.exists():
                outputs[path.name] = hash_file(path)

    def update_metadata(self, **kwargs):
        """Update metadata fields"""
        self.state.setdefault("metadata", {}).update(kwargs)

    def finish(self):
        self.state["finished_at"] = datetime.now(timezone.utc).isoformat()
        self.save()
