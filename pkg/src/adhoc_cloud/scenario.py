"""A small scripted run that walks one job through snapshot, host loss and restore.

Seven hosts ``A``..``G``.  ``A``, ``C``, ``F`` and ``G`` are fresh (score 100)
and pick up the four jobs; ``B``, ``D`` and ``E`` carry a history that ranks
``D`` (97) above ``B`` and ``E`` (90 each).  Timing is scaled down so the whole
story fits in a few simulated seconds:

* t=0  ``A`` snapshots its guest; three copies go to ``D``, ``B``, ``E``
* t=1  the copies land and the snapshot is registered
* t=2  ``A`` drops off the network (its last poll was at t=1)
* t=3  the availability sweep declares ``A`` failed and asks ``D`` to restore
* t=4  ``D`` restores the guest; ``B`` and ``E`` are told to delete their copies
"""

from __future__ import annotations

import warnings
from dataclasses import replace

from .eventlog import EventLog
from .server import PlacementPolicy, TimingConfig
from .simcore import JobSpec, SimConfig, Simulation, TransferModel, Workload
from .trace import ChurnTrace

HOSTS = ("A", "B", "C", "D", "E", "F", "G")

# (assigned, completed, failed)
HISTORY = {"D": (100, 97, 3), "B": (10, 9, 1), "E": (10, 9, 1)}


def walkthrough_config() -> SimConfig:
    with warnings.catch_warnings():
        # the scaled timeout is deliberately tighter than two poll intervals
        warnings.simplefilter("ignore", UserWarning)
        timing = TimingConfig(poll_interval=1.0, failure_timeout=1.5, guest_probe_interval=1.0,
                              snapshot_interval=10.0, sweep_interval=1.0, command_delay=1.0)
    return SimConfig(
        timing=timing,
        # insist on three holders so the restore leaves two copies to clean up
        policy=PlacementPolicy(threshold=0.05, min_replicas=3),
        transfer=TransferModel(bandwidth=6e9, latency=0.5),
    )


def walkthrough_simulation() -> Simulation:
    trace = ChurnTrace(HOSTS, ((2.0, "A", "DOWN"),), (-10.0, 6.0))
    workload = Workload(tuple(JobSpec(-9.5, 100.0, 1_000_000_000) for _ in range(4)))
    sim = Simulation(walkthrough_config(), trace, workload, seed=0)
    hosts = sim.server.state.hosts
    for host, (ca, cc, nf) in HISTORY.items():
        hosts[host] = replace(hosts[host], jobs_assigned=ca, jobs_completed=cc, failures=nf)
    return sim


def restore_walkthrough() -> EventLog:
    return walkthrough_simulation().run()
