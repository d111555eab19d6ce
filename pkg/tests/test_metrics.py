import functools
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from adhoc_cloud.domain import ContractError
from adhoc_cloud.eventlog import LogRecord
from adhoc_cloud.metrics import MetricsReport, compare, fold_event, fold_log, restore_audit
from adhoc_cloud.server import PlacementPolicy
from adhoc_cloud.simcore import SimConfig, Simulation, Workload, run
from adhoc_cloud.trace import ChurnTrace, generate_trace


def test_completion_counts():
    report = fold_log([LogRecord(5, "JobSubmitted", ("j1",)),
                       LogRecord(9, "JobCompleted", ("j1", "g", "A"))])
    assert (report.jobs_completed, report.makespan, report.completion_rate) == (1, 9, 1.0)


def test_restore_command_counts_as_restore():
    rec = LogRecord(3, "CommandIssued", ("D",), {"command": "RestoreSnapshot"})
    assert fold_event(MetricsReport(), rec).restores == 1
    other = LogRecord(3, "CommandIssued", ("D",), {"command": "DeleteSnapshot"})
    assert fold_event(MetricsReport(), other).restores == 0


def test_empty_log_gives_zero_report():
    report = fold_log([])
    assert report.summary() == MetricsReport().summary()
    assert report.completion_rate == 0.0


def test_restore_to_wrong_progress_is_flagged():
    records = [
        LogRecord(1, "SnapshotRegistered", ("g#1", "g", "j1"), {"seq": 1, "progress": 50}),
        LogRecord(2, "GuestLost", ("j1", "g", "A"), {"progress": 80}),
        LogRecord(3, "RestoreApplied", ("j1", "g", "D"), {"snapshot": "g#1", "progress": 40}),
    ]
    report = fold_log(records)
    assert report.restore_violations == 1
    assert report.progress_lost_to_restores == pytest.approx(40)


def test_restore_audit_rows():
    records = [
        LogRecord(1, "SnapshotRegistered", ("g#1", "g", "j1"), {"seq": 1, "progress": 50}),
        LogRecord(2, "GuestLost", ("j1", "g", "A"), {"progress": 80}),
        LogRecord(3, "RestoreApplied", ("j1", "g", "D"), {"snapshot": "g#1", "progress": 50}),
    ]
    assert restore_audit(records) == [{"time": 3, "job": "j1", "restored": 50.0,
                                       "snapshot_progress": 50.0, "progress_at_loss": 80.0}]


@functools.lru_cache(maxsize=None)
def churny_log(seed=3, replication=True):
    trace = generate_trace(10, 3600, 1500, 300, seed)
    cfg = SimConfig(policy=PlacementPolicy(replication=replication, exclude_in_use=False))
    return Simulation(cfg, trace, Workload.uniform(10, 1800, 10**9), seed).run()


@given(st.integers(0, 10**6))
def test_fold_is_stream_mergeable(cut_seed):
    records = list(churny_log())
    cut = cut_seed % (len(records) + 1)
    whole = fold_log(records)
    merged = fold_log(records[cut:], fold_log(records[:cut]))
    assert merged.summary() == whole.summary()


def test_summary_key_order_is_stable():
    report = fold_log(churny_log())
    keys = list(json.loads(report.to_json()))
    assert keys[:3] == ["jobs_submitted", "jobs_completed", "completion_rate"]
    assert keys[-1] == "per_host_reliability_series"
    assert report.to_table().splitlines()[0].startswith("jobs_submitted")


def test_identical_runs_compare_to_zero():
    a = fold_log(churny_log())
    b = fold_log(churny_log.__wrapped__())
    delta = compare(a, b)
    assert (delta.completion_rate, delta.jobs_completed, delta.restores,
            delta.continuity_losses) == (0, 0, 0, 0)


def test_mismatched_workloads_are_rejected():
    a = MetricsReport(jobs_submitted=3)
    b = MetricsReport(jobs_submitted=4)
    with pytest.raises(ContractError):
        compare(a, b)


def test_replication_beats_restart_on_a_churny_trace():
    # paired runs on one trace where hosts fail late into long jobs
    hosts = tuple(f"h{i}" for i in range(6))
    events = ((1500.0, "h0", "DOWN"), (1600.0, "h1", "DOWN"))
    trace = ChurnTrace(hosts, events, (0.0, 3000.0))
    work = Workload.uniform(2, 1800, 10**9)
    restart, _ = run(SimConfig(policy=PlacementPolicy(replication=False)), trace, work, 0)
    replicate, _ = run(SimConfig(), trace, work, 0)
    delta = compare(restart, replicate)
    assert delta.completion_rate > 0
    assert replicate.completion_rate == 1.0 and restart.completion_rate == 0.0
