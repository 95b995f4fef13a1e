from pathlib import Path
import csv
import hashlib
import json
from typing import Any, Iterable, Mapping, Sequence


def ensure_output_dir(path: Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def hash_file(file_path: Path) -> str:
    """Return SHA256 hash of a file."""
    h = hashlib.sha256()
    with Path(file_path).open("rb") as f:
        while chunk := f.read(8192):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: Path, payload: Any) -> Path:
    """
    Write JSON with sorted keys and a trailing newline.

    Two writes of equal payloads produce byte-identical files.
    """
    path = Path(path)
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n",
        encoding="utf-8",
    )
    return path


def read_json(path: Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    """Write rows as CSV with a fixed column order."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row[key] for key in columns})
    return path
