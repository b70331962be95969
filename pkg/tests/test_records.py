import pytest

from donor_memory.noise import ShotRecord
from donor_memory.records import (
    RecordFormatError,
    format_records,
    group_by_basis,
    parse_records,
    read_records,
    write_records,
)

SAMPLE = [
    ShotRecord(basis_phase=0.0, counts_up=120, shots=200, repetition_index=0),
    ShotRecord(basis_phase=0.0, counts_up=118, shots=200, repetition_index=1),
    ShotRecord(basis_phase=15.0, counts_up=110, shots=200, repetition_index=0),
    ShotRecord(basis_phase=None, counts_up=95, shots=200, repetition_index=0),
]


def test_round_trip(tmp_path):
    path = tmp_path / "records.csv"
    write_records(path, SAMPLE, {"seed": 3})
    back = read_records(path)
    assert back == SAMPLE
    text = path.read_text()
    assert text.startswith("# seed=3\n")
    assert "basis,phase_deg,shots,counts_up,repetition" in text


def test_z_rows_have_empty_phase():
    text = format_records(SAMPLE)
    z_line = [l for l in text.splitlines() if l.startswith("Z")][0]
    assert z_line == "Z,,200,95,0"


def test_group_by_basis():
    groups = group_by_basis(SAMPLE)
    assert len(groups[0.0]) == 2
    assert len(groups[None]) == 1


def test_missing_column_reports_line():
    text = "basis,phase_deg,shots,counts_up,repetition\nXY,0.0,200,120\n"
    with pytest.raises(RecordFormatError) as err:
        parse_records(text)
    assert err.value.line == 2
    assert "columns" in str(err.value)


def test_counts_above_shots_reports_line():
    text = (
        "basis,phase_deg,shots,counts_up,repetition\n"
        "XY,0.0,200,120,0\n"
        "XY,15.0,200,220,0\n"
    )
    with pytest.raises(RecordFormatError) as err:
        parse_records(text)
    assert err.value.line == 3
    assert "counts_up" in str(err.value)


def test_bad_header_rejected():
    with pytest.raises(RecordFormatError):
        parse_records("a,b,c\nXY,0.0,200,120,0\n")


def test_bad_basis_and_phase():
    with pytest.raises(RecordFormatError):
        parse_records("basis,phase_deg,shots,counts_up,repetition\nQQ,0.0,200,120,0\n")
    with pytest.raises(RecordFormatError):
        parse_records("basis,phase_deg,shots,counts_up,repetition\nZ,15.0,200,120,0\n")
    with pytest.raises(RecordFormatError):
        parse_records("basis,phase_deg,shots,counts_up,repetition\nXY,abc,200,120,0\n")


def test_empty_file_rejected():
    with pytest.raises(RecordFormatError):
        parse_records("")
