from pathlib import Path

import pytest

from adhoc_cloud.eventlog import list_field
from adhoc_cloud.scenario import restore_walkthrough

GOLDEN = Path(__file__).parent / "golden" / "restore_walkthrough.tsv"


def test_matches_golden_log():
    assert restore_walkthrough().dumps() == GOLDEN.read_text()


def test_story_beats():
    log = restore_walkthrough()
    placed = log.of_kind("PlacementDecided", "A/g1#1")[0]
    assert list_field(placed.get("receivers")) == ["D", "B", "E"]
    assert placed.get("product") == pytest.approx(0.0003)
    assert [r.time for r in log.of_kind("HostDown")] == [2.0]
    assert [r.time for r in log.of_kind("HostDeclaredFailed")] == [3.0]
    restore = [r for r in log.of_kind("CommandIssued") if r.get("command") == "RestoreSnapshot"]
    assert [(r.time, r.ids[0]) for r in restore] == [(3.0, "D")]
    applied = log.of_kind("RestoreApplied")[0]
    assert (applied.time, applied.ids[2], applied.get("progress")) == (4.0, "D", 8.5)
    deletes = [(r.time, r.ids[0]) for r in log.of_kind("CommandIssued")
               if r.get("command") == "DeleteSnapshot"]
    assert deletes == [(4.0, "B"), (4.0, "E")]
