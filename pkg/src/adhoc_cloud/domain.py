"""Core records shared by the server, client and simulation layers."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional


class ContractError(ValueError):
    """Raised when an operation is called outside its preconditions."""


class Liveness(str, enum.Enum):
    UP = "Up"
    DOWN = "Down"
    FAILED = "Failed-declared"


class GuestState(str, enum.Enum):
    STOPPED = "Stopped"
    RUNNING = "Running"
    SUSPENDED = "Suspended"
    FAILED = "Failed"


class JobStatus(str, enum.Enum):
    SUBMITTED = "Submitted"
    SCHEDULED = "Scheduled"
    RUNNING = "Running"
    COMPLETED = "Completed"
    FAILED_PERMANENT = "FailedPermanent"


@dataclass
class HostRecord:
    host_id: str
    jobs_assigned: int = 0
    jobs_completed: int = 0
    failures: int = 0
    liveness: Liveness = Liveness.DOWN
    last_poll_time: float = 0.0
    storage_capacity: int = 10**10
    storage_used: int = 0
    in_use: bool = False
    cloudlets: frozenset = frozenset()

    @property
    def outstanding_jobs(self) -> int:
        """Assignments that have neither completed nor failed yet."""
        return self.jobs_assigned - self.jobs_completed - self.failures

    @property
    def storage_free(self) -> int:
        return self.storage_capacity - self.storage_used


@dataclass
class GuestRecord:
    guest_id: str
    host_id: str
    state: GuestState = GuestState.STOPPED
    job_id: Optional[str] = None
    cloudlet_id: str = "default"


@dataclass
class JobRecord:
    job_id: str
    total_work: float
    snapshot_size: int = 0
    cloudlet_id: Optional[str] = None
    progress: float = 0.0
    status: JobStatus = JobStatus.SUBMITTED
    current_guest: Optional[str] = None
    restore_count: int = 0
    restarts: int = 0
    submitted_at: float = 0.0
    completed_at: Optional[float] = None


@dataclass(frozen=True)
class SnapshotRecord:
    snapshot_id: str
    guest_id: str
    job_id: str
    sequence: int
    captured_at: float
    captured_progress: float
    size: int
    locations: frozenset = frozenset()

    def with_locations(self, locations) -> "SnapshotRecord":
        return SnapshotRecord(
            self.snapshot_id, self.guest_id, self.job_id, self.sequence,
            self.captured_at, self.captured_progress, self.size, frozenset(locations),
        )


@dataclass
class Cloudlet:
    cloudlet_id: str
    member_guests: set = field(default_factory=set)


def snapshot_id_for(guest_id: str, sequence: int) -> str:
    return f"{guest_id}#{sequence}"


def validate(entity) -> list[str]:
    """Return the invariant violations of a single record (empty when valid)."""
    problems: list[str] = []
    if isinstance(entity, HostRecord):
        ca, cc, nf = entity.jobs_assigned, entity.jobs_completed, entity.failures
        if min(ca, cc, nf) < 0:
            problems.append("counters must be non-negative")
        if cc > ca:
            problems.append("CC ≤ CA violated")
        if nf > ca:
            problems.append("NF ≤ CA violated")
        if entity.storage_used > entity.storage_capacity:
            problems.append("storage_used ≤ storage_capacity violated")
        if entity.storage_used < 0:
            problems.append("storage_used must be non-negative")
    elif isinstance(entity, GuestRecord):
        if entity.state in (GuestState.RUNNING, GuestState.SUSPENDED) and entity.job_id is None:
            problems.append(f"guest {entity.state.value} without a job")
    elif isinstance(entity, JobRecord):
        if entity.total_work <= 0:
            problems.append("total_work must be positive")
        if not 0 <= entity.progress <= entity.total_work:
            problems.append("progress outside [0, total_work]")
        done = entity.progress == entity.total_work
        if (entity.status is JobStatus.COMPLETED) != done:
            problems.append("status Completed iff progress = total_work violated")
    elif isinstance(entity, SnapshotRecord):
        if entity.sequence < 1:
            problems.append("sequence must start at 1")
        if entity.size < 0:
            problems.append("size must be non-negative")
        if entity.captured_progress < 0:
            problems.append("captured_progress must be non-negative")
    elif isinstance(entity, Cloudlet):
        pass
    else:
        problems.append(f"unknown record type {type(entity).__name__}")
    return problems


def check_host_history(previous: HostRecord, current: HostRecord) -> list[str]:
    """Invariants that relate two successive versions of the same host."""
    if current.last_poll_time < previous.last_poll_time:
        return ["last_poll_time decreased"]
    return []


def validate_cloudlets(cloudlets: dict, guests: dict) -> list[str]:
    problems = []
    for cid, cloudlet in cloudlets.items():
        for gid in cloudlet.member_guests:
            guest = guests.get(gid)
            if guest is None:
                problems.append(f"cloudlet {cid} lists unknown guest {gid}")
            elif guest.cloudlet_id != cid:
                problems.append(f"guest {gid} cloudlet mismatch ({guest.cloudlet_id} != {cid})")
    for gid, guest in guests.items():
        cloudlet = cloudlets.get(guest.cloudlet_id)
        if cloudlet is None or gid not in cloudlet.member_guests:
            problems.append(f"guest {gid} missing from cloudlet {guest.cloudlet_id}")
    return problems
