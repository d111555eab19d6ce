"""The ad hoc server: job intake, scheduling, liveness sweeps and restores.

All operations run to completion against a single ``ServerState`` and
append the commands they issue to ``state.outbound_commands``; the caller
(normally the simulation engine) drains and delivers them.
"""

from __future__ import annotations

import enum
import warnings
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from .domain import (Cloudlet, ContractError, GuestRecord, GuestState, HostRecord, JobRecord,
                     JobStatus, Liveness, SnapshotRecord, validate, validate_cloudlets)
from .eventlog import EventLog
from .placement import SnapshotRegistry
from .reliability import HostEvent, HostView, rank_ready_hosts, record_event, reliability_view


@dataclass
class TimingConfig:
    poll_interval: float = 60.0
    failure_timeout: float = 120.0
    guest_probe_interval: float = 10.0
    snapshot_interval: float = 300.0
    sweep_interval: float = 10.0
    command_delay: float = 0.0

    def __post_init__(self):
        for name in ("poll_interval", "failure_timeout", "guest_probe_interval",
                     "snapshot_interval", "sweep_interval"):
            if not getattr(self, name) > 0:
                raise ContractError(f"timing.{name} must be positive")
        if self.command_delay < 0:
            raise ContractError("timing.command_delay must be non-negative")
        if self.failure_timeout < 2 * self.poll_interval:
            warnings.warn(
                f"failure_timeout {self.failure_timeout}s is shorter than two poll intervals "
                f"({2 * self.poll_interval}s); a single late poll will look like a failure",
                stacklevel=2)


@dataclass
class PlacementPolicy:
    threshold: float = 0.05
    min_replicas: int = 1
    strict_cloudlet: bool = False
    exclude_in_use: bool = True
    replication: bool = True

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ContractError("placement.threshold must lie in (0, 1)")
        if self.min_replicas < 1:
            raise ContractError("placement.min_replicas must be at least 1")


class CommandKind(str, enum.Enum):
    START_GUEST = "StartGuest"
    SUSPEND_GUEST = "SuspendGuest"
    RESUME_GUEST = "ResumeGuest"
    RESTORE_SNAPSHOT = "RestoreSnapshot"
    DELETE_SNAPSHOT = "DeleteSnapshot"
    TRANSFER_SNAPSHOT = "TransferSnapshot"


@dataclass(frozen=True)
class JobDescriptor:
    job_id: str
    total_work: float
    snapshot_size: int


@dataclass(frozen=True)
class Command:
    target_host: str
    kind: CommandKind
    issued_at: float
    guest_id: Optional[str] = None
    job: Optional[JobDescriptor] = None
    snapshot: Optional[SnapshotRecord] = None
    receivers: tuple = ()


@dataclass(frozen=True)
class GuestReport:
    state: GuestState
    job_id: Optional[str] = None
    progress: float = 0.0


@dataclass(frozen=True)
class PollReport:
    guests: dict = field(default_factory=dict)
    stored_snapshots: frozenset = frozenset()
    storage_used: int = 0
    load: float = 0.0


@dataclass(frozen=True)
class PollResponse:
    peers: tuple
    guests: tuple
    time: float


@dataclass
class ServerState:
    hosts: dict = field(default_factory=dict)
    guests: dict = field(default_factory=dict)
    jobs: dict = field(default_factory=dict)
    cloudlets: dict = field(default_factory=dict)
    snapshot_registry: SnapshotRegistry = field(default_factory=SnapshotRegistry)
    pending_jobs: deque = field(default_factory=deque)
    outbound_commands: deque = field(default_factory=deque)
    clock: float = 0.0
    config: TimingConfig = field(default_factory=TimingConfig)


class Server:
    def __init__(self, timing: TimingConfig | None = None, policy: PlacementPolicy | None = None,
                 log: EventLog | None = None, new_host_prior: float = 100.0,
                 retry_budget: int = 10):
        self.state = ServerState(config=timing or TimingConfig())
        self.policy = policy or PlacementPolicy()
        self.log = log if log is not None else EventLog()
        self.new_host_prior = new_host_prior
        self.retry_budget = retry_budget
        self._job_counter = 0
        self._guest_counters: dict[str, int] = {}
        self._awaiting: dict[str, float] = {}

    # -- setup ---------------------------------------------------------

    def add_host(self, host_id: str, storage_capacity: int = 10**10,
                 cloudlets=("default",)) -> HostRecord:
        if host_id in self.state.hosts:
            raise ContractError(f"host {host_id} already registered")
        host = HostRecord(host_id, storage_capacity=storage_capacity,
                          cloudlets=frozenset(cloudlets))
        self.state.hosts[host_id] = host
        self._provision_guest(host_id)
        return host

    def _provision_guest(self, host_id: str) -> GuestRecord:
        n = self._guest_counters.get(host_id, 0) + 1
        self._guest_counters[host_id] = n
        host = self.state.hosts[host_id]
        cloudlet_id = min(host.cloudlets) if host.cloudlets else "default"
        guest = GuestRecord(f"{host_id}/g{n}", host_id, cloudlet_id=cloudlet_id)
        self.state.guests[guest.guest_id] = guest
        self.state.cloudlets.setdefault(cloudlet_id, Cloudlet(cloudlet_id)).member_guests.add(
            guest.guest_id)
        self.state.snapshot_registry.add_guest(guest.guest_id)
        return guest

    # -- views ---------------------------------------------------------

    def guests_on(self, host_id: str) -> list[GuestRecord]:
        return sorted((g for g in self.state.guests.values() if g.host_id == host_id),
                      key=lambda g: g.guest_id)

    def reliability(self, host_id: str):
        return reliability_view(self.state.hosts[host_id], self.new_host_prior)

    def host_view(self, host_id: str) -> HostView:
        host = self.state.hosts[host_id]
        rv = self.reliability(host_id)
        guests = self.guests_on(host_id)
        return HostView(
            host_id=host_id,
            reliability=rv.reliability,
            failure_probability=rv.failure_probability,
            liveness=host.liveness,
            in_use=host.in_use,
            guest_ready=any(g.state is GuestState.STOPPED and g.job_id is None for g in guests),
            storage_free=host.storage_free,
            cloudlets=host.cloudlets,
            address=f"addr-{host_id}",
        )

    def _refresh_in_use(self, host_id: str) -> None:
        host = self.state.hosts[host_id]
        host.in_use = any(g.job_id is not None for g in self.guests_on(host_id))

    def _apply(self, host_id: str, event: HostEvent, now: float) -> None:
        updated, view = record_event(self.state.hosts[host_id], event, self.new_host_prior)
        self.state.hosts[host_id] = updated
        if view is not None:
            self.log.emit(now, "ReliabilityUpdated", [host_id], cause=event.value,
                          reliability=view.reliability, ca=updated.jobs_assigned,
                          cc=updated.jobs_completed, nf=updated.failures)

    def _issue(self, command: Command) -> Command:
        target = self.state.hosts[command.target_host]
        if target.liveness is not Liveness.UP:
            raise ContractError(f"command {command.kind.value} to non-Up host {command.target_host}")
        self.state.outbound_commands.append(command)
        details = {"command": command.kind.value}
        if command.guest_id:
            details["guest"] = command.guest_id
        if command.job:
            details["job"] = command.job.job_id
        if command.snapshot:
            details["snapshot"] = command.snapshot.snapshot_id
        self.log.emit(command.issued_at, "CommandIssued", [command.target_host], **details)
        return command

    def drain_commands(self) -> list[Command]:
        out = list(self.state.outbound_commands)
        self.state.outbound_commands.clear()
        return out

    def _descriptor(self, job: JobRecord) -> JobDescriptor:
        return JobDescriptor(job.job_id, job.total_work, job.snapshot_size)

    def _delete_copies(self, snapshot: SnapshotRecord, hosts, now: float) -> list[Command]:
        issued = []
        for host_id in sorted(hosts):
            if self.state.hosts[host_id].liveness is Liveness.UP:
                issued.append(self._issue(Command(host_id, CommandKind.DELETE_SNAPSHOT, now,
                                                  guest_id=snapshot.guest_id, snapshot=snapshot)))
        return issued

    # -- job intake and scheduling ---------------------------------------

    def submit_job(self, total_work: float, snapshot_size: int = 0,
                   cloudlet: Optional[str] = None, now: Optional[float] = None) -> str:
        if not total_work > 0:
            raise ContractError(f"job rejected: total_work must be positive, got {total_work}")
        if snapshot_size < 0:
            raise ContractError("job rejected: snapshot_size must be non-negative")
        now = self.state.clock if now is None else now
        self.state.clock = now
        self._job_counter += 1
        job_id = f"j{self._job_counter:04d}"
        self.state.jobs[job_id] = JobRecord(job_id, float(total_work), int(snapshot_size),
                                            cloudlet_id=cloudlet, submitted_at=now)
        self.state.pending_jobs.append(job_id)
        self.log.emit(now, "JobSubmitted", [job_id], work=float(total_work), size=int(snapshot_size))
        self.schedule_pending(now)
        return job_id

    def schedule_pending(self, now: Optional[float] = None) -> list[Command]:
        now = self.state.clock if now is None else now
        if not self.state.pending_jobs:
            return []
        issued = []
        waiting = deque()
        views = {h: self.host_view(h) for h in sorted(self.state.hosts)}
        while self.state.pending_jobs:
            job_id = self.state.pending_jobs.popleft()
            job = self.state.jobs[job_id]
            candidates = [v for v in views.values()
                          if job.cloudlet_id is None or job.cloudlet_id in v.cloudlets]
            ranked = rank_ready_hosts(candidates)
            if not ranked:
                waiting.append(job_id)
                continue
            host_id = ranked[0]
            free = [g for g in self.guests_on(host_id)
                    if g.state is GuestState.STOPPED and g.job_id is None]
            guest = next((g for g in free if g.cloudlet_id == job.cloudlet_id), free[0])
            guest.job_id = job_id
            job.status = JobStatus.SCHEDULED
            job.current_guest = guest.guest_id
            self._refresh_in_use(host_id)
            self._apply(host_id, HostEvent.JOB_ASSIGNED, now)
            self.log.emit(now, "JobScheduled", [job_id, guest.guest_id, host_id])
            self._awaiting[guest.guest_id] = now
            issued.append(self._issue(Command(host_id, CommandKind.START_GUEST, now,
                                              guest_id=guest.guest_id,
                                              job=self._descriptor(job))))
            views[host_id] = self.host_view(host_id)
        self.state.pending_jobs = waiting
        return issued

    # -- liveness ------------------------------------------------------

    def on_poll(self, host_id: str, report: PollReport, now: float) -> PollResponse:
        host = self.state.hosts.get(host_id)
        if host is None:
            raise ContractError(f"poll from unknown host {host_id}")
        if now < host.last_poll_time:
            raise ContractError(f"poll from {host_id} at {now} precedes previous poll")
        self.state.clock = now
        host.last_poll_time = now
        if host.liveness is not Liveness.UP:
            host.liveness = Liveness.UP
            self.log.emit(now, "HostRegistered", [host_id])
        host.storage_used = min(report.storage_used, host.storage_capacity)

        registry = self.state.snapshot_registry
        for gid, snap in registry.items():
            if host_id in snap.locations and snap.snapshot_id not in report.stored_snapshots:
                registry.replace_locations(gid, snap.locations - {host_id})

        for guest in self.guests_on(host_id):
            seen = report.guests.get(guest.guest_id)
            job = self.state.jobs.get(guest.job_id) if guest.job_id else None
            if job is None:
                if guest.state is GuestState.FAILED:
                    guest.state = GuestState.STOPPED
                continue
            alive = (seen is not None and seen.job_id == job.job_id
                     and seen.state in (GuestState.RUNNING, GuestState.SUSPENDED))
            if job.status is JobStatus.RUNNING:
                if alive:
                    guest.state = seen.state
                    job.progress = max(job.progress, min(seen.progress, job.total_work))
                else:
                    self.on_guest_failure_report(host_id, guest.guest_id, now)
            elif job.status is JobStatus.SCHEDULED and not alive:
                # the start/restore command should have landed by now
                issued = self._awaiting.get(guest.guest_id)
                if issued is not None and now > issued + self.state.config.command_delay:
                    self.on_guest_failure_report(host_id, guest.guest_id, now)

        if not any(g.state is not GuestState.FAILED or g.job_id for g in self.guests_on(host_id)):
            self._provision_guest(host_id)
        self._refresh_in_use(host_id)

        peers = tuple(self.host_view(h) for h, rec in sorted(self.state.hosts.items())
                      if h != host_id and rec.liveness is Liveness.UP
                      and rec.storage_used < rec.storage_capacity)
        guests = tuple((g.guest_id, g.state) for g in self.guests_on(host_id))
        return PollResponse(peers, guests, now)

    def availability_sweep(self, now: float) -> tuple[list[str], list[Command]]:
        self.state.clock = now
        timeout = self.state.config.failure_timeout
        newly_failed = []
        for host_id, host in sorted(self.state.hosts.items()):
            if host.liveness is Liveness.UP and now - host.last_poll_time > timeout:
                host.liveness = Liveness.FAILED
                newly_failed.append(host_id)
                self.log.emit(now, "HostDeclaredFailed", [host_id],
                              silence=now - host.last_poll_time)
                self.state.snapshot_registry.drop_host(host_id)
        issued = []
        for host_id in newly_failed:
            for guest in self.guests_on(host_id):
                if guest.job_id is None:
                    if guest.state is not GuestState.STOPPED:
                        guest.state = GuestState.FAILED
                    continue
                self._apply(host_id, HostEvent.HOST_FAILURE, now)
                issued += self.orchestrate_restore(guest.guest_id, now)
            self._refresh_in_use(host_id)
        return newly_failed, issued

    # -- continuity ------------------------------------------------------

    def orchestrate_restore(self, guest_id: str, now: float) -> list[Command]:
        """Move a failed guest's job onto the best surviving snapshot holder.

        Without a surviving copy the job goes back to the queue at zero
        progress (a continuity loss).
        """
        guest = self.state.guests[guest_id]
        job = self.state.jobs[guest.job_id]
        old_host = guest.host_id
        guest.state = GuestState.FAILED
        registry = self.state.snapshot_registry
        snap = registry.get(guest_id)

        if job.restore_count + job.restarts >= self.retry_budget:
            registry.pop(guest_id)
            guest.job_id = None
            job.status = JobStatus.FAILED_PERMANENT
            job.current_guest = None
            self._refresh_in_use(old_host)
            self.log.emit(now, "JobFailedPermanent", [job.job_id],
                          restores=job.restore_count, restarts=job.restarts)
            return self._delete_copies(snap, snap.locations, now) if snap else []

        survivors = []
        if snap is not None:
            survivors = [h for h in snap.locations
                         if self.state.hosts[h].liveness is Liveness.UP]
        if not survivors:
            registry.pop(guest_id)
            lost = job.progress
            guest.job_id = None
            job.status = JobStatus.SUBMITTED
            job.progress = 0.0
            job.current_guest = None
            job.restarts += 1
            self.state.pending_jobs.append(job.job_id)
            self._refresh_in_use(old_host)
            self.log.emit(now, "ContinuityLoss", [job.job_id, guest_id],
                          lost_progress=lost, had_snapshot=snap is not None)
            return []

        target = min(survivors, key=lambda h: (-self.reliability(h).reliability, h))
        guest.host_id = target
        guest.state = GuestState.STOPPED
        job.status = JobStatus.SCHEDULED
        job.restore_count += 1
        self._refresh_in_use(old_host)
        self._refresh_in_use(target)
        self._apply(target, HostEvent.JOB_ASSIGNED, now)
        self._awaiting[guest_id] = now
        return [self._issue(Command(target, CommandKind.RESTORE_SNAPSHOT, now,
                                    guest_id=guest_id, job=self._descriptor(job),
                                    snapshot=snap))]

    def on_guest_failure_report(self, host_id: str, guest_id: str, now: float) -> list[Command]:
        guest = self.state.guests.get(guest_id)
        if guest is None:
            raise ContractError(f"failure report for unknown guest {guest_id}")
        self.state.clock = now
        if guest.state is GuestState.FAILED or guest.host_id != host_id:
            return []
        self.log.emit(now, "GuestFailureReported", [guest_id, host_id])
        if guest.job_id is None:
            guest.state = GuestState.FAILED
            return []
        self._apply(host_id, HostEvent.GUEST_FAILURE, now)
        return self.orchestrate_restore(guest_id, now)

    def on_job_complete(self, job_id: str, now: float) -> list[Command]:
        job = self.state.jobs.get(job_id)
        if job is None or job.status is not JobStatus.RUNNING:
            status = job.status.value if job else "unknown"
            raise ContractError(f"completion for job {job_id} in state {status}")
        self.state.clock = now
        guest = self.state.guests[job.current_guest]
        job.status = JobStatus.COMPLETED
        job.progress = job.total_work
        job.completed_at = now
        self._apply(guest.host_id, HostEvent.JOB_COMPLETED, now)
        guest.job_id = None
        guest.state = GuestState.STOPPED
        self._refresh_in_use(guest.host_id)
        self.log.emit(now, "JobCompleted", [job_id, guest.guest_id, guest.host_id],
                      work=job.total_work)
        snap = self.state.snapshot_registry.pop(guest.guest_id)
        return self._delete_copies(snap, snap.locations, now) if snap else []

    def on_snapshot_round(self, host_id: str, snapshot: SnapshotRecord, receivers,
                          now: float) -> list[Command]:
        """Record the hosts that now hold ``snapshot``; retire the guest's previous one."""
        self.state.clock = now
        receivers = frozenset(receivers)
        guest = self.state.guests.get(snapshot.guest_id)
        job = self.state.jobs.get(snapshot.job_id)
        current = (guest is not None and guest.host_id == host_id
                   and guest.job_id == snapshot.job_id and job is not None
                   and job.status is JobStatus.RUNNING)
        prior = self.state.snapshot_registry.get(snapshot.guest_id)
        if current and prior is not None and prior.sequence >= snapshot.sequence:
            current = False
        if not current:
            self.log.emit(now, "SnapshotRejected", [snapshot.snapshot_id, snapshot.guest_id])
            return self._delete_copies(snapshot, receivers, now)
        if not receivers:
            return []
        deletions = self.state.snapshot_registry.register(snapshot, receivers)
        for h in receivers:
            rec = self.state.hosts[h]
            rec.storage_used = min(rec.storage_capacity, rec.storage_used + snapshot.size)
        job.progress = max(job.progress, snapshot.captured_progress)
        self.log.emit(now, "SnapshotRegistered",
                      [snapshot.snapshot_id, snapshot.guest_id, snapshot.job_id],
                      seq=snapshot.sequence, progress=snapshot.captured_progress,
                      locations=sorted(receivers))
        issued = []
        for h, old in deletions:
            issued += self._delete_copies(old, [h], now)
        return issued

    def on_command_ack(self, command: Command, ok: bool, now: float) -> list[Command]:
        self.state.clock = now
        kind = command.kind
        guest = self.state.guests.get(command.guest_id) if command.guest_id else None
        if kind in (CommandKind.DELETE_SNAPSHOT, CommandKind.TRANSFER_SNAPSHOT):
            return []
        if guest is None or guest.host_id != command.target_host:
            return []
        if kind in (CommandKind.START_GUEST, CommandKind.RESTORE_SNAPSHOT):
            job = self.state.jobs.get(command.job.job_id)
            if job is None or job.status is not JobStatus.SCHEDULED or guest.job_id != job.job_id:
                return []
            if not ok:
                if kind is CommandKind.RESTORE_SNAPSHOT:
                    snap = self.state.snapshot_registry.get(guest.guest_id)
                    if snap is not None:
                        self.state.snapshot_registry.replace_locations(
                            guest.guest_id, snap.locations - {command.target_host})
                return self.on_guest_failure_report(command.target_host, guest.guest_id, now)
            self._awaiting.pop(guest.guest_id, None)
            guest.state = GuestState.RUNNING
            job.status = JobStatus.RUNNING
            self._refresh_in_use(guest.host_id)
            if kind is CommandKind.START_GUEST:
                self.log.emit(now, "JobStarted", [job.job_id, guest.guest_id, guest.host_id],
                              progress=job.progress)
                return []
            snap = self.state.snapshot_registry.pop(guest.guest_id)
            job.progress = command.snapshot.captured_progress
            self.log.emit(now, "RestoreApplied", [job.job_id, guest.guest_id, guest.host_id],
                          snapshot=command.snapshot.snapshot_id,
                          progress=command.snapshot.captured_progress)
            remaining = (snap.locations if snap else command.snapshot.locations) - {guest.host_id}
            return self._delete_copies(command.snapshot, remaining, now)
        if not ok:
            return self.on_guest_failure_report(command.target_host, guest.guest_id, now)
        if kind is CommandKind.SUSPEND_GUEST:
            guest.state = GuestState.SUSPENDED
        elif kind is CommandKind.RESUME_GUEST:
            guest.state = GuestState.RUNNING
        return []

    def on_guest_state_change(self, host_id: str, guest_id: str, state: GuestState,
                              now: float) -> None:
        """Client-initiated suspend/resume notifications."""
        guest = self.state.guests.get(guest_id)
        if guest is not None and guest.host_id == host_id and guest.job_id is not None:
            guest.state = state

    # -- checks ----------------------------------------------------------

    def check_invariants(self) -> list[str]:
        problems = []
        for host_id, host in self.state.hosts.items():
            problems += [f"{host_id}: {p}" for p in validate(host)]
        for guest_id, guest in self.state.guests.items():
            problems += [f"{guest_id}: {p}" for p in validate(guest)]
        for job_id, job in self.state.jobs.items():
            problems += [f"{job_id}: {p}" for p in validate(job)]
        problems += validate_cloudlets(self.state.cloudlets, self.state.guests)
        running_jobs = {}
        for gid, guest in self.state.guests.items():
            if guest.host_id not in self.state.hosts:
                problems.append(f"guest {gid} on unknown host {guest.host_id}")
            if guest.job_id is not None:
                job = self.state.jobs.get(guest.job_id)
                if job is None:
                    problems.append(f"guest {gid} references unknown job {guest.job_id}")
                elif job.current_guest != gid:
                    problems.append(f"job {job.job_id} not bound to guest {gid}")
                if guest.state is GuestState.RUNNING:
                    if guest.job_id in running_jobs:
                        problems.append(f"job {guest.job_id} running on two guests")
                    running_jobs[guest.job_id] = gid
        for job_id, job in self.state.jobs.items():
            if job.status is JobStatus.RUNNING:
                g = self.state.guests.get(job.current_guest)
                if g is None or g.job_id != job_id:
                    problems.append(f"running job {job_id} has no guest")
        for gid, snap in self.state.snapshot_registry.items():
            if gid not in self.state.guests:
                problems.append(f"registry entry for unknown guest {gid}")
            for h in snap.locations:
                if h not in self.state.hosts:
                    problems.append(f"snapshot {snap.snapshot_id} stored on unknown host {h}")
        return problems
