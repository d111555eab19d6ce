from hypothesis import given
from hypothesis import strategies as st

from adhoc_cloud.eventlog import EventLog, LogRecord, fmt_value, list_field, read_log


def test_line_layout():
    rec = LogRecord(12.5, "JobScheduled", ("j0001", "A/g1", "A"), {"progress": 3.0})
    assert rec.to_line() == "12.5\tJobScheduled\tj0001,A/g1,A\tprogress=3"


def test_empty_ids_and_details():
    assert LogRecord(0.0, "SimulationEnd").to_line() == "0\tSimulationEnd\t-\t"


def test_value_formatting():
    assert fmt_value(0.1 + 0.2) == "0.3"
    assert fmt_value(True) == "true"
    assert fmt_value(["B", "D"]) == "B,D"
    assert fmt_value(frozenset({"E", "B"})) == "B,E"
    assert fmt_value([]) == "-"
    assert list_field("B,D") == ["B", "D"] and list_field("-") == []


def test_log_file_round_trip(tmp_path):
    log = EventLog()
    log.emit(1, "HostUp", ["A"])
    log.emit(2.25, "PlacementDecided", ["A/g1#1"], receivers=["B", "C"], product=0.02,
             degraded=False)
    (tmp_path / "e.tsv").write_text(log.dumps())
    back = read_log(tmp_path / "e.tsv")
    assert [r.to_line() for r in back] == log.lines()
    assert back[1].get("degraded") is False
    assert list_field(back[1].get("receivers")) == ["B", "C"]


@given(st.floats(0, 1e6, allow_nan=False).map(lambda x: round(x, 3)),
       st.dictionaries(st.sampled_from(["a", "b", "c"]), st.integers(-5, 5)))
def test_lines_survive_a_parse(t, details):
    rec = LogRecord(t, "K", ("x",), details)
    assert LogRecord.from_line(rec.to_line()).to_line() == rec.to_line()
