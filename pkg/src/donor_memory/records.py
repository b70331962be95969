"""Flat measurement-record files shared by the simulator and the ingestion path.

Schema: CSV with header `basis,phase_deg,shots,counts_up,repetition`.
XY rows carry basis=XY and the tomography pulse phase in degrees; Z-basis
rows carry basis=Z and an empty phase field. Lines starting with '#' are
metadata comments (config hash, seed) and are skipped on read.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .noise import ShotRecord

HEADER = ["basis", "phase_deg", "shots", "counts_up", "repetition"]


class RecordFormatError(ValueError):
    """A measurement-record file violates the schema; carries a line number."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(message + where)


def format_records(records: Sequence[ShotRecord], metadata: Optional[dict] = None) -> str:
    buf = io.StringIO()
    if metadata:
        for key in sorted(metadata):
            buf.write(f"# {key}={metadata[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for rec in records:
        basis = "Z" if rec.basis_phase is None else "XY"
        phase = "" if rec.basis_phase is None else repr(float(rec.basis_phase))
        writer.writerow([basis, phase, rec.shots, rec.counts_up, rec.repetition_index])
    return buf.getvalue()


def write_records(path, records: Sequence[ShotRecord], metadata: Optional[dict] = None) -> None:
    Path(path).write_text(format_records(records, metadata))


def parse_records(text: str) -> list[ShotRecord]:
    """Parse and validate record CSV text; errors carry 1-based line numbers."""
    records: list[ShotRecord] = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if not header_seen:
            if [f.strip() for f in fields] != HEADER:
                raise RecordFormatError(
                    f"header must be {','.join(HEADER)}, got {line!r}", lineno
                )
            header_seen = True
            continue
        if len(fields) != len(HEADER):
            raise RecordFormatError(
                f"expected {len(HEADER)} columns, got {len(fields)}", lineno
            )
        basis, phase_s, shots_s, counts_s, rep_s = (f.strip() for f in fields)
        if basis not in ("XY", "Z"):
            raise RecordFormatError(f"basis must be XY or Z, got {basis!r}", lineno)
        if basis == "Z":
            if phase_s != "":
                raise RecordFormatError("Z-basis rows must leave phase_deg empty", lineno)
            phase = None
        else:
            try:
                phase = float(phase_s)
            except ValueError:
                raise RecordFormatError(f"bad phase_deg {phase_s!r}", lineno) from None
        try:
            shots = int(shots_s)
            counts = int(counts_s)
            rep = int(rep_s)
        except ValueError:
            raise RecordFormatError(f"bad integer field in {line!r}", lineno) from None
        if shots < 1:
            raise RecordFormatError("shots must be >= 1", lineno)
        if not 0 <= counts <= shots:
            raise RecordFormatError(
                f"counts_up {counts} outside [0, shots={shots}]", lineno
            )
        records.append(
            ShotRecord(basis_phase=phase, counts_up=counts, shots=shots, repetition_index=rep)
        )
    if not header_seen:
        raise RecordFormatError("file has no header row")
    return records


def read_records(path) -> list[ShotRecord]:
    return parse_records(Path(path).read_text())


def group_by_basis(records: Sequence[ShotRecord]) -> dict:
    """Map basis key (phase in degrees, or None for Z) to its record list."""
    groups: dict = {}
    for rec in records:
        groups.setdefault(rec.basis_phase, []).append(rec)
    return groups
