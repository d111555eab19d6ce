"""Run statistics folded from the event log."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

from .domain import ContractError
from .eventlog import LogRecord, list_field

RESTORE_TOLERANCE = 1e-6


@dataclass
class MetricsReport:
    jobs_submitted: int = 0
    jobs_completed: int = 0
    restores: int = 0
    continuity_losses: int = 0
    degraded_placements: int = 0
    placements: int = 0
    snapshot_bytes_transferred: int = 0
    detection_latency_total: float = 0.0
    detections: int = 0
    guest_losses: int = 0
    restores_applied: int = 0
    restore_violations: int = 0
    progress_lost_to_restores: float = 0.0
    progress_lost_to_restarts: float = 0.0
    makespan: float = 0.0
    makespan_overhead: Optional[float] = None
    workload_id: str = ""
    per_host_reliability_series: list = field(default_factory=list)
    # fold state carried across log segments
    _down_since: dict = field(default_factory=dict, repr=False)
    _latest_snapshot: dict = field(default_factory=dict, repr=False)
    _lost_at: dict = field(default_factory=dict, repr=False)

    @property
    def completion_rate(self) -> float:
        return self.jobs_completed / self.jobs_submitted if self.jobs_submitted else 0.0

    @property
    def mean_detection_latency(self) -> float:
        return self.detection_latency_total / self.detections if self.detections else 0.0

    def summary(self) -> dict:
        """Public figures in a stable key order."""
        return {
            "jobs_submitted": self.jobs_submitted,
            "jobs_completed": self.jobs_completed,
            "completion_rate": round(self.completion_rate, 6),
            "restores": self.restores,
            "restores_applied": self.restores_applied,
            "continuity_losses": self.continuity_losses,
            "degraded_placements": self.degraded_placements,
            "placements": self.placements,
            "snapshot_bytes_transferred": self.snapshot_bytes_transferred,
            "mean_detection_latency": round(self.mean_detection_latency, 6),
            "detections": self.detections,
            "guest_losses": self.guest_losses,
            "restore_violations": self.restore_violations,
            "progress_lost_to_restores": round(self.progress_lost_to_restores, 6),
            "progress_lost_to_restarts": round(self.progress_lost_to_restarts, 6),
            "makespan": round(self.makespan, 6),
            "makespan_overhead": None if self.makespan_overhead is None
            else round(self.makespan_overhead, 6),
            "workload_id": self.workload_id,
        }

    def to_json(self) -> str:
        data = self.summary()
        data["per_host_reliability_series"] = [list(row) for row in self.per_host_reliability_series]
        return json.dumps(data, indent=2) + "\n"

    def to_table(self) -> str:
        rows = self.summary()
        width = max(len(k) for k in rows)
        return "".join(f"{k:<{width}}  {v}\n" for k, v in rows.items())


def fold_event(report: MetricsReport, record: LogRecord) -> MetricsReport:
    kind = record.kind
    t = record.time
    if kind == "JobSubmitted":
        report.jobs_submitted += 1
    elif kind == "JobCompleted":
        report.jobs_completed += 1
        report.makespan = max(report.makespan, t)
        report._latest_snapshot.pop(record.ids[0], None)
    elif kind == "CommandIssued" and record.get("command") == "RestoreSnapshot":
        report.restores += 1
    elif kind == "ContinuityLoss":
        report.continuity_losses += 1
        job = record.ids[0]
        # the client-side loss record is exact; the server only knows the last poll
        lost = report._lost_at.pop(job, None)
        report.progress_lost_to_restarts += float(
            lost if lost is not None else record.get("lost_progress", 0.0))
        report._latest_snapshot.pop(job, None)
    elif kind == "PlacementDecided":
        report.placements += 1
        if record.get("degraded"):
            report.degraded_placements += 1
    elif kind == "TransferCompleted":
        report.snapshot_bytes_transferred += int(record.get("size", 0))
    elif kind == "HostDown":
        report._down_since.setdefault(record.ids[0], t)
    elif kind == "HostUp":
        pass
    elif kind == "HostDeclaredFailed":
        since = report._down_since.pop(record.ids[0], None)
        if since is not None:
            report.detection_latency_total += t - since
            report.detections += 1
    elif kind == "HostRegistered":
        report._down_since.pop(record.ids[0], None)
    elif kind == "ReliabilityUpdated":
        report.per_host_reliability_series.append(
            (t, record.ids[0], float(record.get("reliability"))))
    elif kind == "SnapshotRegistered":
        job = record.ids[2]
        report._latest_snapshot[job] = (record.ids[0], float(record.get("progress")))
    elif kind == "GuestLost":
        report.guest_losses += 1
        report._lost_at[record.ids[0]] = float(record.get("progress"))
    elif kind == "RestoreApplied":
        job = record.ids[0]
        report.restores_applied += 1
        restored = float(record.get("progress"))
        latest = report._latest_snapshot.pop(job, None)
        if latest is None or latest[0] != record.get("snapshot") \
                or abs(latest[1] - restored) > RESTORE_TOLERANCE:
            report.restore_violations += 1
        lost_at = report._lost_at.pop(job, None)
        if lost_at is not None:
            if restored > lost_at + RESTORE_TOLERANCE:
                report.restore_violations += 1
            report.progress_lost_to_restores += max(lost_at - restored, 0.0)
    return report


def fold_log(records: Iterable[LogRecord], report: Optional[MetricsReport] = None,
             horizon: Optional[float] = None) -> MetricsReport:
    report = report if report is not None else MetricsReport()
    for record in records:
        fold_event(report, record)
    return report


@dataclass(frozen=True)
class ReportDelta:
    completion_rate: float
    jobs_completed: int
    restores: int
    continuity_losses: int
    makespan_overhead: Optional[float]


def compare(report_a: MetricsReport, report_b: MetricsReport) -> ReportDelta:
    """Differences ``b - a`` between two runs of the same workload."""
    if report_a.jobs_submitted != report_b.jobs_submitted \
            or report_a.workload_id != report_b.workload_id:
        raise ContractError("reports describe different workloads")
    overhead = None
    if report_a.makespan_overhead is not None and report_b.makespan_overhead is not None:
        overhead = report_b.makespan_overhead - report_a.makespan_overhead
    return ReportDelta(
        completion_rate=report_b.completion_rate - report_a.completion_rate,
        jobs_completed=report_b.jobs_completed - report_a.jobs_completed,
        restores=report_b.restores - report_a.restores,
        continuity_losses=report_b.continuity_losses - report_a.continuity_losses,
        makespan_overhead=overhead,
    )


def restore_audit(records: Iterable[LogRecord]) -> list[dict]:
    """Per-restore accounting: progress at loss, snapshot progress, and progress restored."""
    latest: dict = {}
    lost_at: dict = {}
    rows = []
    for r in records:
        if r.kind == "SnapshotRegistered":
            latest[r.ids[2]] = float(r.get("progress"))
        elif r.kind == "GuestLost":
            lost_at[r.ids[0]] = float(r.get("progress"))
        elif r.kind in ("ContinuityLoss", "JobCompleted"):
            latest.pop(r.ids[0], None)
            lost_at.pop(r.ids[0], None)
        elif r.kind == "RestoreApplied":
            job = r.ids[0]
            rows.append({"time": r.time, "job": job, "restored": float(r.get("progress")),
                         "snapshot_progress": latest.pop(job, None),
                         "progress_at_loss": lost_at.pop(job, None)})
    return rows
