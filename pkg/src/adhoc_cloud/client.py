"""Per-host ad hoc client: heartbeats, guest probing, load control and snapshots."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .domain import ContractError, GuestState, SnapshotRecord, snapshot_id_for
from .eventlog import EventLog
from .placement import PlacementDecision, filter_receivers, select_receivers
from .server import (Command, CommandKind, GuestReport, PlacementPolicy, PollReport,
                     PollResponse)

_ALLOWED = {
    GuestState.STOPPED: {GuestState.RUNNING},
    GuestState.RUNNING: {GuestState.SUSPENDED, GuestState.STOPPED, GuestState.FAILED},
    GuestState.SUSPENDED: {GuestState.RUNNING, GuestState.STOPPED, GuestState.FAILED},
    GuestState.FAILED: set(),
}


@dataclass
class LocalGuest:
    """The client's view of one guest, including its job's progress clock."""

    guest_id: str
    state: GuestState = GuestState.STOPPED
    job_id: Optional[str] = None
    total_work: float = 0.0
    snapshot_size: int = 0
    progress: float = 0.0
    updated_at: float = 0.0
    sequence: int = 0
    token: int = 0
    failure_reported: bool = False

    def progress_at(self, now: float, rate: float) -> float:
        if self.state is GuestState.RUNNING:
            return min(self.total_work, self.progress + rate * (now - self.updated_at))
        return self.progress


@dataclass
class SnapshotRound:
    snapshot: SnapshotRecord
    decision: PlacementDecision
    outstanding: set = field(default_factory=set)
    delivered: list = field(default_factory=list)


@dataclass
class Ack:
    ok: bool
    reason: str = ""


@dataclass
class ClientState:
    host_id: str
    guests: dict = field(default_factory=dict)
    resource_limit: float = 0.5
    sustain_window: int = 3
    recent_samples: deque = field(default_factory=deque)
    known_peers: tuple = ()
    pending_transfers: dict = field(default_factory=dict)
    stored: dict = field(default_factory=dict)
    storage_capacity: int = 10**10
    cloudlets: frozenset = frozenset({"default"})
    suspended: bool = False

    def __post_init__(self):
        self.recent_samples = deque(self.recent_samples, maxlen=self.sustain_window)

    @property
    def storage_used(self) -> int:
        return sum(self.stored.values())


class Client:
    def __init__(self, host_id: str, work_rate: float = 1.0, policy: PlacementPolicy | None = None,
                 resource_limit: float = 0.5, sustain_window: int = 3,
                 storage_capacity: int = 10**10, cloudlets=("default",),
                 log: EventLog | None = None):
        if work_rate <= 0:
            raise ContractError("work_rate must be positive")
        self.state = ClientState(host_id, resource_limit=resource_limit,
                                 sustain_window=sustain_window,
                                 storage_capacity=storage_capacity,
                                 cloudlets=frozenset(cloudlets))
        self.rate = work_rate
        self.policy = policy or PlacementPolicy()
        self.log = log if log is not None else EventLog()

    @property
    def host_id(self) -> str:
        return self.state.host_id

    def guest(self, guest_id: str) -> LocalGuest:
        return self.state.guests[guest_id]

    # -- progress accounting ---------------------------------------------

    def _settle(self, g: LocalGuest, now: float) -> None:
        g.progress = g.progress_at(now, self.rate)
        g.updated_at = now

    def _transition(self, g: LocalGuest, new_state: GuestState, now: float) -> None:
        if new_state not in _ALLOWED[g.state]:
            raise ContractError(f"{g.guest_id}: illegal transition {g.state.value} -> {new_state.value}")
        self._settle(g, now)
        g.state = new_state
        g.token += 1

    def completion_time(self, guest_id: str, now: float) -> Optional[float]:
        """When the guest's job will finish if it keeps running uninterrupted."""
        g = self.state.guests.get(guest_id)
        if g is None or g.state is not GuestState.RUNNING or g.job_id is None:
            return None
        remaining = g.total_work - g.progress_at(now, self.rate)
        return now + max(remaining, 0.0) / self.rate

    def finish_job(self, guest_id: str, token: int, now: float) -> Optional[str]:
        """Called when a completion check fires; returns the finished job id if still valid."""
        g = self.state.guests.get(guest_id)
        if g is None or g.token != token or g.state is not GuestState.RUNNING:
            return None
        job_id = g.job_id
        self._settle(g, now)
        g.progress = g.total_work
        self._transition(g, GuestState.STOPPED, now)
        g.job_id = None
        self.state.pending_transfers.pop(guest_id, None)
        return job_id

    # -- heartbeat -------------------------------------------------------

    def heartbeat_tick(self, now: float, load: float = 0.0) -> PollReport:
        guests = {
            gid: GuestReport(g.state, g.job_id, g.progress_at(now, self.rate))
            for gid, g in sorted(self.state.guests.items())
        }
        return PollReport(guests, frozenset(self.state.stored), self.state.storage_used, load)

    def apply_poll_response(self, response: PollResponse, now: float) -> None:
        self.state.known_peers = tuple(response.peers)
        listed = dict(response.guests)
        for gid in list(self.state.guests):
            if gid not in listed:
                del self.state.guests[gid]
                self.state.pending_transfers.pop(gid, None)
        for gid, server_state in listed.items():
            g = self.state.guests.get(gid)
            if g is None:
                self.state.guests[gid] = LocalGuest(gid, updated_at=now)
            elif g.state is GuestState.FAILED and server_state is GuestState.STOPPED:
                self.state.guests[gid] = LocalGuest(gid, updated_at=now, sequence=g.sequence)

    # -- guest liveness --------------------------------------------------

    def fail_guest(self, guest_id: str, now: float) -> Optional[float]:
        """Crash a guest; returns the progress it had reached, or None if it held no job."""
        g = self.state.guests.get(guest_id)
        if g is None or g.state is GuestState.FAILED:
            return None
        self._settle(g, now)
        g.state = GuestState.FAILED
        g.token += 1
        self.state.pending_transfers.pop(guest_id, None)
        return g.progress if g.job_id is not None else None

    def guest_probe(self, now: float) -> list[str]:
        """Guests found crashed since the last probe; each is reported once."""
        found = []
        for gid, g in sorted(self.state.guests.items()):
            if g.state is GuestState.FAILED and not g.failure_reported:
                g.failure_reported = True
                found.append(gid)
        return found

    def resource_monitor(self, sample: float, now: float) -> Optional[str]:
        """Suspend guests after a sustained load breach, resume after sustained calm."""
        if not 0.0 <= sample <= 1.0:
            raise ContractError(f"usage sample {sample} outside [0, 1]")
        samples = self.state.recent_samples
        samples.append(sample)
        if len(samples) < samples.maxlen:
            return None
        limit = self.state.resource_limit
        if not self.state.suspended and all(s > limit for s in samples):
            running = [g for g in self.state.guests.values() if g.state is GuestState.RUNNING]
            self.state.suspended = True
            for g in running:
                self._transition(g, GuestState.SUSPENDED, now)
            return "suspend"
        if self.state.suspended and all(s <= limit for s in samples):
            self.state.suspended = False
            for g in self.state.guests.values():
                if g.state is GuestState.SUSPENDED:
                    self._transition(g, GuestState.RUNNING, now)
            return "resume"
        return None

    # -- snapshots -------------------------------------------------------

    def snapshot_tick(self, now: float) -> list[SnapshotRound]:
        """Capture each running guest and pick where its snapshot goes."""
        rounds = []
        if not self.policy.replication:
            return rounds
        for gid, g in sorted(self.state.guests.items()):
            if g.state is not GuestState.RUNNING or g.job_id is None:
                continue
            if gid in self.state.pending_transfers:
                self.log.emit(now, "SnapshotSkipped", [gid], reason="round-in-flight")
                continue
            g.sequence += 1
            progress = g.progress_at(now, self.rate)
            snap = SnapshotRecord(snapshot_id_for(gid, g.sequence), gid, g.job_id, g.sequence,
                                  now, progress, g.snapshot_size)
            self.log.emit(now, "SnapshotCaptured", [snap.snapshot_id, gid, g.job_id],
                          seq=g.sequence, progress=progress, size=g.snapshot_size)
            candidates = filter_receivers(self.host_id, self.state.cloudlets,
                                          self.state.known_peers, g.snapshot_size,
                                          strict_cloudlet=self.policy.strict_cloudlet,
                                          exclude_in_use=self.policy.exclude_in_use)
            decision = select_receivers(candidates, self.policy.threshold,
                                        self.policy.min_replicas)
            self.log.emit(now, "PlacementDecided", [snap.snapshot_id],
                          receivers=list(decision.receivers),
                          product=decision.combined_failure_probability,
                          degraded=decision.degraded)
            if not decision.receivers:
                continue
            rnd = SnapshotRound(snap, decision, set(decision.receivers))
            self.state.pending_transfers[gid] = rnd
            rounds.append(rnd)
        return rounds

    def transfer_finished(self, guest_id: str, snapshot_id: str, receiver: str,
                          delivered: bool) -> Optional[SnapshotRound]:
        """Book one transfer outcome; returns the round once every transfer is resolved."""
        rnd = self.state.pending_transfers.get(guest_id)
        if rnd is None or rnd.snapshot.snapshot_id != snapshot_id:
            return None
        rnd.outstanding.discard(receiver)
        if delivered:
            rnd.delivered.append(receiver)
        if rnd.outstanding:
            return None
        del self.state.pending_transfers[guest_id]
        return rnd

    def accept_snapshot(self, snapshot: SnapshotRecord) -> bool:
        """Store an inbound copy if it fits."""
        if snapshot.snapshot_id in self.state.stored:
            return True
        if self.state.storage_used + snapshot.size > self.state.storage_capacity:
            return False
        self.state.stored[snapshot.snapshot_id] = snapshot.size
        return True

    # -- server commands -------------------------------------------------

    def execute_command(self, command: Command, now: float) -> Ack:
        if command.target_host != self.host_id:
            raise ContractError(f"command for {command.target_host} delivered to {self.host_id}")
        kind = command.kind
        try:
            if kind is CommandKind.START_GUEST:
                g = self.state.guests.setdefault(command.guest_id,
                                                 LocalGuest(command.guest_id, updated_at=now))
                if g.state is not GuestState.STOPPED:
                    return Ack(False, f"guest is {g.state.value}")
                self._settle(g, now)
                g.job_id = command.job.job_id
                g.total_work = command.job.total_work
                g.snapshot_size = command.job.snapshot_size
                g.progress = 0.0
                self._transition(g, GuestState.RUNNING, now)
                if self.state.suspended:
                    self._transition(g, GuestState.SUSPENDED, now)
                return Ack(True)
            if kind is CommandKind.RESTORE_SNAPSHOT:
                snap = command.snapshot
                if snap.snapshot_id not in self.state.stored:
                    return Ack(False, "snapshot copy missing")
                del self.state.stored[snap.snapshot_id]
                g = LocalGuest(command.guest_id, state=GuestState.STOPPED, job_id=snap.job_id,
                               total_work=command.job.total_work,
                               snapshot_size=command.job.snapshot_size,
                               progress=snap.captured_progress, updated_at=now,
                               sequence=snap.sequence)
                self.state.guests[command.guest_id] = g
                self._transition(g, GuestState.RUNNING, now)
                if self.state.suspended:
                    self._transition(g, GuestState.SUSPENDED, now)
                return Ack(True)
            if kind is CommandKind.DELETE_SNAPSHOT:
                self.state.stored.pop(command.snapshot.snapshot_id, None)
                return Ack(True)
            if kind is CommandKind.TRANSFER_SNAPSHOT:
                return Ack(True)
            g = self.state.guests.get(command.guest_id)
            if g is None:
                return Ack(False, "unknown guest")
            if kind is CommandKind.SUSPEND_GUEST:
                self._transition(g, GuestState.SUSPENDED, now)
            elif kind is CommandKind.RESUME_GUEST:
                if g.state is not GuestState.SUSPENDED:
                    return Ack(False, f"cannot resume a {g.state.value} guest")
                self._transition(g, GuestState.RUNNING, now)
            return Ack(True)
        except ContractError as exc:
            return Ack(False, str(exc))
