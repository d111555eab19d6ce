"""Choosing and tracking the hosts that hold a guest's snapshot."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .domain import ContractError, Liveness, SnapshotRecord
from .reliability import HostView

DEFAULT_THRESHOLD = 0.05


@dataclass(frozen=True)
class PlacementDecision:
    receivers: tuple
    combined_failure_probability: float
    degraded: bool


def _ranked(views: Iterable[HostView]) -> list[HostView]:
    return sorted(views, key=lambda v: (-v.reliability, v.host_id))


def filter_receivers(sender: str, sender_cloudlets, candidates: Iterable[HostView],
                     snapshot_size: int = 0, strict_cloudlet: bool = False,
                     exclude_in_use: bool = True) -> list[HostView]:
    """Candidate receivers for ``sender``'s snapshot, in preference order.

    Hosts sharing a cloudlet with the sender come first; with
    ``strict_cloudlet`` the others are dropped entirely.
    """
    sender_cloudlets = frozenset(sender_cloudlets)
    eligible = [
        v for v in candidates
        if v.host_id != sender
        and v.liveness is Liveness.UP
        and not (exclude_in_use and v.in_use)
        and v.storage_free >= snapshot_size
    ]
    local = [v for v in eligible if v.cloudlets & sender_cloudlets]
    if strict_cloudlet:
        return _ranked(local)
    others = [v for v in eligible if not v.cloudlets & sender_cloudlets]
    return _ranked(local) + _ranked(others)


def select_receivers(candidates: Sequence, threshold: float = DEFAULT_THRESHOLD,
                     min_replicas: int = 1) -> PlacementDecision:
    """Take the shortest prefix of ``candidates`` whose joint failure chance is within threshold.

    ``candidates`` holds HostView objects or ``(host_id, failure_probability)``
    pairs.  When no prefix qualifies every candidate is used and the decision
    is flagged degraded.
    """
    pairs = [(c.host_id, c.failure_probability) if isinstance(c, HostView) else tuple(c)
             for c in candidates]
    for host_id, p in pairs:
        if not 0.0 < p < 1.0:
            raise ContractError(f"failure probability of {host_id} must lie in (0, 1), got {p}")
    product = 1.0
    chosen = []
    for host_id, p in pairs:
        chosen.append(host_id)
        product *= p
        if product <= threshold and len(chosen) >= min_replicas:
            break
    return PlacementDecision(tuple(chosen), product, not chosen or product > threshold)


class SnapshotRegistry:
    """Server-side index of the latest snapshot of each guest."""

    def __init__(self):
        self._known: set[str] = set()
        self._entries: dict[str, SnapshotRecord] = {}

    def add_guest(self, guest_id: str) -> None:
        self._known.add(guest_id)

    def __contains__(self, guest_id) -> bool:
        return guest_id in self._entries

    def __getitem__(self, guest_id) -> SnapshotRecord:
        return self._entries[guest_id]

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, guest_id, default=None):
        return self._entries.get(guest_id, default)

    def items(self):
        return sorted(self._entries.items())

    def register(self, snapshot: SnapshotRecord, receivers) -> list[tuple[str, SnapshotRecord]]:
        """Store ``snapshot`` as the guest's only entry.

        Returns the (host, old snapshot) pairs whose copies must now be deleted.
        """
        if snapshot.guest_id not in self._known:
            raise ContractError(f"unknown guest {snapshot.guest_id}")
        previous = self._entries.get(snapshot.guest_id)
        if previous is not None and previous.sequence >= snapshot.sequence:
            raise ContractError(
                f"stale snapshot {snapshot.snapshot_id}: registry holds sequence {previous.sequence}")
        self._entries[snapshot.guest_id] = snapshot.with_locations(receivers)
        if previous is None:
            return []
        return [(host, previous) for host in sorted(previous.locations)]

    def pop(self, guest_id) -> SnapshotRecord | None:
        return self._entries.pop(guest_id, None)

    def replace_locations(self, guest_id: str, locations) -> None:
        self._entries[guest_id] = self._entries[guest_id].with_locations(locations)

    def drop_host(self, host_id: str) -> list[str]:
        """Forget every copy held by ``host_id``; returns the affected guests."""
        touched = []
        for gid, snap in list(self._entries.items()):
            if host_id in snap.locations:
                self._entries[gid] = snap.with_locations(snap.locations - {host_id})
                touched.append(gid)
        return sorted(touched)


def register_snapshot(snapshot: SnapshotRecord, decision: PlacementDecision,
                      registry: SnapshotRegistry) -> list[tuple[str, SnapshotRecord]]:
    return registry.register(snapshot, decision.receivers)
