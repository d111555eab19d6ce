"""Deterministic discrete-event engine that drives the server and clients.

The engine owns ground truth (which hosts are physically up, how far each
guest has really progressed) and the message timing between clients and the
server.  Events are totally ordered by ``(time, sequence)``; sequence numbers
are handed out at enqueue time so equal-time events fire FIFO.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Optional

from .client import Client
from .domain import ContractError, GuestState, JobStatus
from .eventlog import EventLog
from .server import Command, CommandKind, PlacementPolicy, Server, TimingConfig
from .trace import DOWN, ChurnTrace


class EventKind(str, enum.Enum):
    HOST_UP = "HostUp"
    HOST_DOWN = "HostDown"
    HEARTBEAT_TICK = "HeartbeatTick"
    GUEST_PROBE_TICK = "GuestProbeTick"
    SNAPSHOT_TICK = "SnapshotTick"
    SWEEP_TICK = "SweepTick"
    TRANSFER_COMPLETE = "TransferComplete"
    JOB_PROGRESS_CHECK = "JobProgressCheck"
    COMMAND_DELIVERY = "CommandDelivery"
    JOB_SUBMIT = "JobSubmit"
    GUEST_FAULT = "GuestFault"


@dataclass(order=True)
class Event:
    time: float
    sequence: int
    kind: EventKind = field(compare=False)
    payload: dict = field(compare=False, default_factory=dict)


class EventQueue:
    def __init__(self):
        self._heap: list[Event] = []
        self._counter = itertools.count()

    def push(self, time: float, kind: EventKind, **payload) -> Event:
        event = Event(float(time), next(self._counter), kind, payload)
        heapq.heappush(self._heap, event)
        return event

    def pop(self) -> Event:
        return heapq.heappop(self._heap)

    def peek(self) -> Optional[Event]:
        return self._heap[0] if self._heap else None

    def __len__(self):
        return len(self._heap)


@dataclass
class TransferModel:
    bandwidth: float = 1.0e8
    latency: float = 0.5

    def __post_init__(self):
        if not self.bandwidth > 0 or self.latency < 0:
            raise ContractError("transfer model needs bandwidth > 0 and latency >= 0")

    def duration(self, size: int, concurrent: int = 1) -> float:
        """Seconds to push ``size`` bytes while sharing the sender's link ``concurrent`` ways."""
        return self.latency + size * max(concurrent, 1) / self.bandwidth


@dataclass
class ProgressModel:
    work_rate: float = 1.0

    def __post_init__(self):
        if not self.work_rate > 0:
            raise ContractError("work_rate must be positive")


@dataclass
class LoadModel:
    """Two-state host-user load, sampled at each guest probe."""

    busy_prob: float = 0.0
    calm_prob: float = 0.5
    busy_level: float = 0.9
    idle_level: float = 0.1


@dataclass
class SimConfig:
    timing: TimingConfig = field(default_factory=TimingConfig)
    policy: PlacementPolicy = field(default_factory=PlacementPolicy)
    transfer: TransferModel = field(default_factory=TransferModel)
    progress: ProgressModel = field(default_factory=ProgressModel)
    load: LoadModel = field(default_factory=LoadModel)
    storage_capacity: int = 10**10
    cloudlets: int = 1
    resource_limit: float = 0.5
    sustain_window: int = 3
    guest_failure_rate: float = 0.0
    new_host_prior: float = 100.0
    retry_budget: int = 10
    horizon: Optional[float] = None
    check_invariants: bool = False


@dataclass(frozen=True)
class JobSpec:
    submit_time: float
    total_work: float
    snapshot_size: int = 0
    cloudlet: Optional[str] = None


@dataclass(frozen=True)
class Workload:
    jobs: tuple = ()

    @classmethod
    def uniform(cls, count: int, total_work: float, snapshot_size: int,
                arrival_interval: float = 0.0, start: float = 0.0) -> "Workload":
        return cls(tuple(JobSpec(start + i * arrival_interval, total_work, snapshot_size)
                         for i in range(count)))

    def validate(self) -> None:
        for i, job in enumerate(self.jobs):
            if not job.total_work > 0:
                raise ContractError(f"workload job {i}: total_work must be positive")
            if job.snapshot_size < 0:
                raise ContractError(f"workload job {i}: snapshot_size must be non-negative")
            if not math.isfinite(job.submit_time):
                raise ContractError(f"workload job {i}: submit time must be finite")


class InvariantViolation(AssertionError):
    pass


class Simulation:
    def __init__(self, config: SimConfig, trace: ChurnTrace, workload: Workload, seed: int = 0):
        trace.validate()
        workload.validate()
        self.config = config
        self.trace = trace
        self.workload = workload
        self.seed = seed
        self.log = EventLog()
        self.queue = EventQueue()
        self.start = trace.window[0]
        horizon = config.horizon if config.horizon is not None else trace.window[1]
        if not horizon > self.start:
            raise ContractError("simulation horizon must lie after the trace start")
        self.horizon = horizon
        self.now = self.start
        self.server = Server(config.timing, config.policy, self.log,
                             config.new_host_prior, config.retry_budget)
        self.clients: dict[str, Client] = {}
        self.epoch: dict[str, int] = {}
        self._cloudlets: dict[str, tuple] = {}
        self._load_rng: dict[str, random.Random] = {}
        self._load_busy: dict[str, bool] = {}
        self._fault_rng: dict[str, random.Random] = {}
        self._fault_gen: dict[tuple, int] = {}
        self._submitted = 0
        self.finished = False

        for i, host in enumerate(trace.hosts):
            cloudlet = f"c{i % config.cloudlets}" if config.cloudlets > 1 else "default"
            self._cloudlets[host] = (cloudlet,)
            record = self.server.add_host(host, config.storage_capacity, self._cloudlets[host])
            record.last_poll_time = self.start
            self.epoch[host] = 0
            self._load_rng[host] = random.Random(f"{seed}/{host}/load")
            self._load_busy[host] = False
            self._fault_rng[host] = random.Random(f"{seed}/{host}/fault")
        for host in trace.hosts:
            if host not in trace.initially_down:
                self.queue.push(self.start, EventKind.HOST_UP, host=host)
        for t, host, state in trace.events:
            kind = EventKind.HOST_DOWN if state == DOWN else EventKind.HOST_UP
            self.queue.push(t, kind, host=host)
        for spec in sorted(workload.jobs, key=lambda j: j.submit_time):
            self.queue.push(max(spec.submit_time, self.start), EventKind.JOB_SUBMIT, spec=spec)
        self.queue.push(self.start + config.timing.sweep_interval, EventKind.SWEEP_TICK)

    # -- helpers ---------------------------------------------------------

    def _next_boundary(self, now: float, interval: float) -> float:
        k = math.ceil((now - self.start) / interval - 1e-12)
        return self.start + k * interval

    def _alive(self, host: str, epoch: Optional[int] = None) -> bool:
        return host in self.clients and (epoch is None or self.epoch[host] == epoch)

    def _flush(self) -> None:
        for cmd in self.server.drain_commands():
            self.queue.push(self.now + self.config.timing.command_delay,
                            EventKind.COMMAND_DELIVERY, command=cmd)

    def _schedule_completion(self, host: str, guest_id: str) -> None:
        client = self.clients[host]
        at = client.completion_time(guest_id, self.now)
        if at is not None:
            self.queue.push(at, EventKind.JOB_PROGRESS_CHECK, host=host, epoch=self.epoch[host],
                            guest=guest_id, token=client.guest(guest_id).token)

    def _arm_fault(self, host: str, guest_id: str) -> None:
        key = (host, guest_id)
        self._fault_gen[key] = self._fault_gen.get(key, 0) + 1
        rate = self.config.guest_failure_rate
        if rate > 0:
            delay = self._fault_rng[host].expovariate(rate)
            self.queue.push(self.now + delay, EventKind.GUEST_FAULT, host=host,
                            epoch=self.epoch[host], guest=guest_id, gen=self._fault_gen[key])

    def _all_done(self) -> bool:
        if self._submitted < len(self.workload.jobs):
            return False
        return all(j.status in (JobStatus.COMPLETED, JobStatus.FAILED_PERMANENT)
                   for j in self.server.state.jobs.values())

    # -- main loop -------------------------------------------------------

    def run(self) -> EventLog:
        handlers = {
            EventKind.HOST_UP: self._on_host_up,
            EventKind.HOST_DOWN: self._on_host_down,
            EventKind.HEARTBEAT_TICK: self._on_heartbeat,
            EventKind.GUEST_PROBE_TICK: self._on_probe,
            EventKind.SNAPSHOT_TICK: self._on_snapshot,
            EventKind.SWEEP_TICK: self._on_sweep,
            EventKind.TRANSFER_COMPLETE: self._on_transfer,
            EventKind.JOB_PROGRESS_CHECK: self._on_progress_check,
            EventKind.COMMAND_DELIVERY: self._on_command,
            EventKind.JOB_SUBMIT: self._on_submit,
            EventKind.GUEST_FAULT: self._on_guest_fault,
        }
        while self.queue:
            nxt = self.queue.peek()
            if nxt.time > self.horizon:
                break
            event = self.queue.pop()
            self.now = event.time
            handlers[event.kind](**event.payload)
            if self.config.check_invariants:
                self._check()
            if self._all_done():
                break
        self.finished = True
        self.log.emit(self.now if self._all_done() else self.horizon, "SimulationEnd", [],
                      all_done=self._all_done())
        return self.log

    def _check(self) -> None:
        problems = self.server.check_invariants()
        for host, client in self.clients.items():
            if client.state.storage_used > client.state.storage_capacity:
                problems.append(f"{host}: stored snapshots exceed capacity")
        if problems:
            raise InvariantViolation(f"t={self.now}: " + "; ".join(problems))

    # -- handlers --------------------------------------------------------

    def _on_host_up(self, host: str) -> None:
        if host in self.clients:
            return
        cfg = self.config
        self.epoch[host] += 1
        self.clients[host] = Client(host, cfg.progress.work_rate, cfg.policy, cfg.resource_limit,
                                    cfg.sustain_window, cfg.storage_capacity,
                                    self._cloudlets[host], self.log)
        self._load_busy[host] = False
        self.log.emit(self.now, "HostUp", [host])
        ep = self.epoch[host]
        t = cfg.timing
        self.queue.push(self._next_boundary(self.now, t.poll_interval), EventKind.HEARTBEAT_TICK,
                        host=host, epoch=ep)
        self.queue.push(self._next_boundary(self.now, t.guest_probe_interval),
                        EventKind.GUEST_PROBE_TICK, host=host, epoch=ep)
        self.queue.push(self._next_boundary(self.now, t.snapshot_interval),
                        EventKind.SNAPSHOT_TICK, host=host, epoch=ep)

    def _on_host_down(self, host: str) -> None:
        client = self.clients.pop(host, None)
        if client is None:
            return
        self.epoch[host] += 1
        self.log.emit(self.now, "HostDown", [host])
        for gid, g in sorted(client.state.guests.items()):
            if g.job_id is not None and g.state in (GuestState.RUNNING, GuestState.SUSPENDED):
                self.log.emit(self.now, "GuestLost", [g.job_id, gid, host], cause="host-down",
                              progress=g.progress_at(self.now, client.rate))

    def _on_heartbeat(self, host: str, epoch: int) -> None:
        if not self._alive(host, epoch):
            return
        client = self.clients[host]
        report = client.heartbeat_tick(self.now, self._current_load(host))
        response = self.server.on_poll(host, report, self.now)
        client.apply_poll_response(response, self.now)
        self.server.schedule_pending(self.now)
        self._flush()
        self.queue.push(self.now + self.config.timing.poll_interval, EventKind.HEARTBEAT_TICK,
                        host=host, epoch=epoch)

    def _current_load(self, host: str) -> float:
        lm = self.config.load
        return lm.busy_level if self._load_busy[host] else lm.idle_level

    def _sample_load(self, host: str) -> float:
        lm = self.config.load
        rng = self._load_rng[host]
        u = rng.random()
        if self._load_busy[host]:
            if u < lm.calm_prob:
                self._load_busy[host] = False
        elif u < lm.busy_prob:
            self._load_busy[host] = True
        return self._current_load(host)

    def _on_probe(self, host: str, epoch: int) -> None:
        if not self._alive(host, epoch):
            return
        client = self.clients[host]
        for gid in client.guest_probe(self.now):
            self.server.on_guest_failure_report(host, gid, self.now)
        action = client.resource_monitor(self._sample_load(host), self.now)
        if action is not None:
            state = GuestState.SUSPENDED if action == "suspend" else GuestState.RUNNING
            for gid, g in sorted(client.state.guests.items()):
                if g.state is state:
                    self.log.emit(self.now, "GuestSuspended" if action == "suspend"
                                  else "GuestResumed", [gid, host])
                    self.server.on_guest_state_change(host, gid, state, self.now)
                    if state is GuestState.RUNNING:
                        self._schedule_completion(host, gid)
        self._flush()
        self.queue.push(self.now + self.config.timing.guest_probe_interval,
                        EventKind.GUEST_PROBE_TICK, host=host, epoch=epoch)

    def _on_snapshot(self, host: str, epoch: int) -> None:
        if not self._alive(host, epoch):
            return
        client = self.clients[host]
        rounds = client.snapshot_tick(self.now)
        in_flight = sum(len(r.outstanding) for r in client.state.pending_transfers.values())
        for rnd in rounds:
            snap = rnd.snapshot
            duration = self.config.transfer.duration(snap.size, in_flight)
            for receiver in rnd.decision.receivers:
                self.log.emit(self.now, "TransferStarted", [snap.snapshot_id, host, receiver],
                              size=snap.size, eta=self.now + duration)
                self.queue.push(self.now + duration, EventKind.TRANSFER_COMPLETE, sender=host,
                                epoch=epoch, guest=snap.guest_id, snapshot=snap,
                                receiver=receiver)
        self.queue.push(self.now + self.config.timing.snapshot_interval, EventKind.SNAPSHOT_TICK,
                        host=host, epoch=epoch)

    def _on_transfer(self, sender: str, epoch: int, guest: str, snapshot, receiver: str) -> None:
        sid = snapshot.snapshot_id
        client = self.clients.get(sender)
        rnd = client.state.pending_transfers.get(guest) if self._alive(sender, epoch) else None
        if rnd is None or rnd.snapshot.snapshot_id != sid:
            self.log.emit(self.now, "TransferVoided", [sid, sender, receiver])
            return
        delivered = receiver in self.clients and self.clients[receiver].accept_snapshot(snapshot)
        if delivered:
            self.log.emit(self.now, "TransferCompleted", [sid, sender, receiver],
                          size=snapshot.size)
        else:
            self.log.emit(self.now, "TransferFailed", [sid, sender, receiver])
        done = client.transfer_finished(guest, sid, receiver, delivered)
        if done is None:
            return
        if done.delivered:
            self.server.on_snapshot_round(sender, snapshot, done.delivered, self.now)
        else:
            self.log.emit(self.now, "SnapshotRoundFailed", [sid])
        self._flush()

    def _on_progress_check(self, host: str, epoch: int, guest: str, token: int) -> None:
        if not self._alive(host, epoch):
            return
        job_id = self.clients[host].finish_job(guest, token, self.now)
        if job_id is None:
            return
        job = self.server.state.jobs.get(job_id)
        srv_guest = self.server.state.guests.get(guest)
        if (job is None or job.status is not JobStatus.RUNNING or job.current_guest != guest
                or srv_guest is None or srv_guest.host_id != host):
            self.log.emit(self.now, "CompletionIgnored", [job_id, guest, host])
            return
        self.server.on_job_complete(job_id, self.now)
        self.server.schedule_pending(self.now)
        self._flush()

    def _on_command(self, command: Command) -> None:
        host = command.target_host
        if host not in self.clients:
            self.log.emit(self.now, "CommandLost", [host], command=command.kind.value)
            return
        client = self.clients[host]
        ack = client.execute_command(command, self.now)
        if not ack.ok:
            self.log.emit(self.now, "CommandRejected", [host], command=command.kind.value,
                          guest=command.guest_id or "-")
        self.server.on_command_ack(command, ack.ok, self.now)
        if ack.ok and command.kind in (CommandKind.START_GUEST, CommandKind.RESTORE_SNAPSHOT,
                                       CommandKind.RESUME_GUEST):
            self._schedule_completion(host, command.guest_id)
            if command.kind is not CommandKind.RESUME_GUEST:
                self._arm_fault(host, command.guest_id)
        self._flush()

    def _on_submit(self, spec: JobSpec) -> None:
        self._submitted += 1
        self.server.submit_job(spec.total_work, spec.snapshot_size, spec.cloudlet, self.now)
        self._flush()

    def _on_sweep(self) -> None:
        self.server.availability_sweep(self.now)
        self.server.schedule_pending(self.now)
        self._flush()
        self.queue.push(self.now + self.config.timing.sweep_interval, EventKind.SWEEP_TICK)

    def _on_guest_fault(self, host: str, epoch: int, guest: str, gen: int) -> None:
        if not self._alive(host, epoch) or self._fault_gen.get((host, guest)) != gen:
            return
        client = self.clients[host]
        g = client.state.guests.get(guest)
        if g is None or g.job_id is None:
            return
        job_id = g.job_id
        progress = client.fail_guest(guest, self.now)
        if progress is not None:
            self.log.emit(self.now, "GuestLost", [job_id, guest, host], cause="guest-fault",
                          progress=progress)


def run(config: SimConfig, trace: ChurnTrace, workload: Workload, seed: int = 0):
    """Run one simulation; returns ``(MetricsReport, EventLog)``."""
    from .metrics import fold_log

    sim = Simulation(config, trace, workload, seed)
    log = sim.run()
    return fold_log(log, horizon=sim.horizon), log
