import pytest

from adhoc_cloud.domain import (Cloudlet, GuestRecord, GuestState, HostRecord, JobRecord,
                                JobStatus, SnapshotRecord, check_host_history, snapshot_id_for,
                                validate, validate_cloudlets)


def test_valid_host_has_no_problems():
    assert validate(HostRecord("A", jobs_assigned=4, jobs_completed=3, failures=1)) == []


def test_completed_above_assigned_is_reported():
    assert validate(HostRecord("A", jobs_assigned=2, jobs_completed=3)) == ["CC ≤ CA violated"]


def test_failures_above_assigned_is_reported():
    assert "NF ≤ CA violated" in validate(HostRecord("A", jobs_assigned=1, failures=2))


def test_storage_overflow_is_reported():
    host = HostRecord("A", storage_capacity=10, storage_used=11)
    assert validate(host) == ["storage_used ≤ storage_capacity violated"]


def test_completed_job_at_full_progress_is_valid():
    job = JobRecord("j1", total_work=100, progress=100, status=JobStatus.COMPLETED)
    assert validate(job) == []


@pytest.mark.parametrize("progress,status", [
    (99, JobStatus.COMPLETED),
    (100, JobStatus.RUNNING),
])
def test_completion_status_tracks_progress(progress, status):
    job = JobRecord("j1", total_work=100, progress=progress, status=status)
    assert validate(job) == ["status Completed iff progress = total_work violated"]


def test_running_guest_needs_a_job():
    assert validate(GuestRecord("g", "A", state=GuestState.RUNNING)) == [
        "guest Running without a job"]


def test_snapshot_sequence_starts_at_one():
    snap = SnapshotRecord("g#0", "g", "j", 0, 0.0, 0.0, 10)
    assert validate(snap) == ["sequence must start at 1"]


def test_snapshot_ids_are_guest_and_sequence():
    assert snapshot_id_for("A/g1", 3) == "A/g1#3"


def test_with_locations_keeps_everything_else():
    snap = SnapshotRecord("g#1", "g", "j", 1, 5.0, 42.0, 10)
    moved = snap.with_locations(["B", "D"])
    assert moved.locations == frozenset({"B", "D"})
    assert (moved.captured_progress, moved.sequence) == (42.0, 1)
    assert snap.locations == frozenset()


def test_poll_time_must_not_go_backwards():
    assert check_host_history(HostRecord("A", last_poll_time=60),
                              HostRecord("A", last_poll_time=30)) == ["last_poll_time decreased"]


def test_cloudlet_membership_is_bidirectional():
    guests = {"g1": GuestRecord("g1", "A", cloudlet_id="c0")}
    assert validate_cloudlets({"c0": Cloudlet("c0", {"g1"})}, guests) == []
    problems = validate_cloudlets({"c0": Cloudlet("c0", set())}, guests)
    assert problems == ["guest g1 missing from cloudlet c0"]
