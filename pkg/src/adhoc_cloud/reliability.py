"""Host reliability scoring, failure probabilities and ready-host ranking."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .domain import ContractError, HostRecord, Liveness

PROBABILITY_FLOOR = 0.01
PROBABILITY_CEILING = 0.99


class HostEvent(str, enum.Enum):
    JOB_ASSIGNED = "JobAssigned"
    JOB_COMPLETED = "JobCompleted"
    HOST_FAILURE = "HostFailure"
    GUEST_FAILURE = "GuestFailure"


@dataclass(frozen=True)
class ReliabilityView:
    host_id: str
    reliability: float
    failure_probability: float


@dataclass(frozen=True)
class HostView:
    """What the server knows about a host, as handed to ranking and placement.

    Poll responses carry a list of these as the peer directory.
    """

    host_id: str
    reliability: float
    failure_probability: float
    liveness: Liveness = Liveness.UP
    in_use: bool = False
    guest_ready: bool = True
    storage_free: int = 0
    cloudlets: frozenset = field(default_factory=frozenset)
    address: str = ""


def host_reliability(assigned: int, completed: int, failures: int,
                     new_host_prior: float = 100.0) -> float:
    """Percentage reliability from a host's assigned/completed/failed counters.

    A host that never received a job gets ``new_host_prior`` (100 reproduces
    the formula literally, since NF = 0 there).
    """
    if min(assigned, completed, failures) < 0:
        raise ContractError("reliability counters must be non-negative")
    if completed > assigned:
        raise ContractError(f"completed ({completed}) exceeds assigned ({assigned})")
    if failures > assigned:
        raise ContractError(f"failures ({failures}) exceeds assigned ({assigned})")
    if assigned == 0:
        return float(new_host_prior)
    if failures == assigned:
        return 0.0
    if failures == 0:
        return 100.0
    return completed / assigned * 100.0


def failure_probability(reliability: float) -> float:
    if not 0.0 <= reliability <= 100.0:
        raise ContractError(f"reliability {reliability} outside [0, 100]")
    p = (100.0 - reliability) / 100.0
    return min(max(p, PROBABILITY_FLOOR), PROBABILITY_CEILING)


def reliability_view(host: HostRecord, new_host_prior: float = 100.0) -> ReliabilityView:
    rel = host_reliability(host.jobs_assigned, host.jobs_completed, host.failures, new_host_prior)
    return ReliabilityView(host.host_id, rel, failure_probability(rel))


def rank_ready_hosts(hosts: Iterable[HostView]) -> list[str]:
    """Hosts able to take a job right now, most reliable first.

    Ties are broken by host id so the order never depends on input order.
    """
    ready = [h for h in hosts
             if h.liveness is Liveness.UP and h.guest_ready and not h.in_use]
    ready.sort(key=lambda h: (-h.reliability, h.host_id))
    return [h.host_id for h in ready]


def record_event(host: HostRecord, event: HostEvent,
                 new_host_prior: float = 100.0) -> tuple[HostRecord, Optional[ReliabilityView]]:
    """Apply one scheduling event to a host's counters.

    Failures only count against an assignment that is still outstanding, so
    NF never exceeds CA.  The reliability view is returned for every event
    that triggers a recomputation and is ``None`` after JobAssigned.
    """
    event = HostEvent(event)
    if event is HostEvent.JOB_ASSIGNED:
        return replace(host, jobs_assigned=host.jobs_assigned + 1), None
    if event is HostEvent.JOB_COMPLETED:
        if host.outstanding_jobs <= 0:
            raise ContractError(f"{host.host_id}: completion without an outstanding assignment")
        updated = replace(host, jobs_completed=host.jobs_completed + 1)
    else:
        if host.outstanding_jobs > 0:
            updated = replace(host, failures=host.failures + 1)
        else:
            updated = host
    return updated, reliability_view(updated, new_host_prior)
