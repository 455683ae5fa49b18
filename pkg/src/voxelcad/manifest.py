"""Dataset manifest CSV: subject_id,label,path,modality.

Paths in the file are relative to the manifest's directory; readers resolve
them. Labels are matched exactly against "AD"/"HC" (no trimming), modality
against the Modality enum names.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .labels import VALID_LABELS
from .volume import Modality

_COLUMNS = ["subject_id", "label", "path", "modality"]


@dataclass(frozen=True)
class ManifestRow:
    subject_id: str
    label: str
    path: Path  # absolute, resolved against the manifest location
    modality: Modality


def write_manifest(path, rows: list[tuple[str, str, str, Modality]]) -> None:
    """Write manifest rows given as (subject_id, label, relative_path, modality)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_COLUMNS)
        for subject_id, label, rel_path, modality in rows:
            writer.writerow([subject_id, label, rel_path, modality.name])


def read_manifest(path) -> list[ManifestRow]:
    path = Path(path)
    base = path.parent
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _COLUMNS:
            raise ValueError(f"{path}: manifest header must be {','.join(_COLUMNS)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(_COLUMNS):
                raise ValueError(f"{path}:{lineno}: expected {len(_COLUMNS)} fields")
            subject_id, label, rel_path, modality_name = rec
            if label not in VALID_LABELS:
                raise ValueError(
                    f"{path}:{lineno}: unknown label {label!r}; expected one of {VALID_LABELS}"
                )
            try:
                modality = Modality[modality_name]
            except KeyError:
                raise ValueError(
                    f"{path}:{lineno}: unknown modality {modality_name!r}"
                ) from None
            rows.append(ManifestRow(subject_id, label, base / rel_path, modality))
    if not rows:
        raise ValueError(f"{path}: manifest has no data rows")
    return rows
