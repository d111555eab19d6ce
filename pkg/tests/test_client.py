import pytest
from hypothesis import given
from hypothesis import strategies as st

from adhoc_cloud.client import Client
from adhoc_cloud.domain import ContractError, GuestState, SnapshotRecord
from adhoc_cloud.reliability import HostView
from adhoc_cloud.server import CommandKind, Command, JobDescriptor, PlacementPolicy, PollResponse


def start_cmd(host="A", guest="A/g1", job="j1", work=1000.0, size=100, at=0.0):
    return Command(host, CommandKind.START_GUEST, at, guest_id=guest,
                   job=JobDescriptor(job, work, size))


def running_client(**kw):
    c = Client("A", **kw)
    c.apply_poll_response(PollResponse((), (("A/g1", GuestState.STOPPED),), 0.0), 0.0)
    assert c.execute_command(start_cmd(), 0.0).ok
    return c


def peer(host, rel, **kw):
    return HostView(host, rel, (100 - rel) / 100 or 0.01, storage_free=10**12,
                    cloudlets=frozenset({"default"}), **kw)


def test_start_guest_runs_the_job():
    c = running_client()
    g = c.guest("A/g1")
    assert g.state is GuestState.RUNNING and g.job_id == "j1"


def test_heartbeat_reports_running_guest_and_progress():
    c = running_client()
    report = c.heartbeat_tick(60.0)
    assert report.guests["A/g1"].state is GuestState.RUNNING
    assert report.guests["A/g1"].progress == 60.0


def test_peer_list_is_replaced_wholesale():
    c = Client("A")
    c.apply_poll_response(PollResponse((peer("B", 90), peer("C", 80)), (), 0.0), 0.0)
    c.apply_poll_response(PollResponse((peer("D", 70),), (), 60.0), 60.0)
    assert [p.host_id for p in c.state.known_peers] == ["D"]


def test_probe_reports_a_crash_once():
    c = running_client()
    assert c.guest_probe(100.0) == []
    c.fail_guest("A/g1", 103.0)
    assert c.guest_probe(110.0) == ["A/g1"]
    assert c.guest_probe(120.0) == []


def test_healthy_guest_is_not_reported():
    assert running_client().guest_probe(10.0) == []


@pytest.mark.parametrize("samples,action", [
    ((0.7, 0.7, 0.7), "suspend"),
    ((0.7, 0.4, 0.7), None),
])
def test_sustained_breach_suspends(samples, action):
    c = running_client()
    actions = [c.resource_monitor(s, float(i)) for i, s in enumerate(samples)]
    assert actions[-1] == action
    assert actions[:-1] == [None] * (len(samples) - 1)


def test_sustained_calm_resumes():
    c = running_client()
    for i in range(3):
        c.resource_monitor(0.9, float(i))
    assert c.guest("A/g1").state is GuestState.SUSPENDED
    actions = [c.resource_monitor(0.3, 10.0 + i) for i in range(3)]
    assert actions == [None, None, "resume"]
    assert c.guest("A/g1").state is GuestState.RUNNING


def sliding_window_oracle(samples, limit=0.5, window=3):
    suspended, out = False, []
    for i in range(len(samples)):
        recent = samples[max(0, i - window + 1):i + 1]
        act = None
        if len(recent) == window:
            if not suspended and all(s > limit for s in recent):
                suspended, act = True, "suspend"
            elif suspended and all(s <= limit for s in recent):
                suspended, act = False, "resume"
        out.append(act)
    return out


@given(st.lists(st.sampled_from([0.1, 0.5, 0.51, 0.9]), max_size=40))
def test_monitor_matches_sliding_window_oracle(samples):
    c = running_client()
    got = [c.resource_monitor(s, float(i)) for i, s in enumerate(samples)]
    assert got == sliding_window_oracle(samples)


def test_suspended_guest_makes_no_progress():
    c = running_client()
    for i in range(3):
        c.resource_monitor(0.9, 10.0 + i)      # suspended at t=12
    assert c.heartbeat_tick(500.0).guests["A/g1"].progress == pytest.approx(12.0)


def test_snapshot_captures_current_progress():
    c = running_client()
    c.apply_poll_response(PollResponse((peer("B", 90), peer("C", 97)),
                                       (("A/g1", GuestState.RUNNING),), 0.0), 0.0)
    rounds = c.snapshot_tick(120.0)
    assert len(rounds) == 1
    snap = rounds[0].snapshot
    assert (snap.sequence, snap.captured_progress) == (1, 120.0)
    assert rounds[0].decision.receivers == ("C",)


def test_no_peers_gives_degraded_decision_and_no_round():
    c = running_client()
    assert c.snapshot_tick(300.0) == []
    placed = c.log.of_kind("PlacementDecided")
    assert placed and placed[0].get("degraded") is True


def test_replication_off_takes_no_snapshots():
    c = running_client(policy=PlacementPolicy(replication=False))
    c.apply_poll_response(PollResponse((peer("B", 90),), (("A/g1", GuestState.RUNNING),), 0.0), 0.0)
    assert c.snapshot_tick(300.0) == []


def test_restore_resumes_at_snapshot_progress():
    c = Client("D")
    snap = SnapshotRecord("A/g1#2", "A/g1", "j1", 2, 100.0, 120.0, 100)
    assert c.accept_snapshot(snap)
    cmd = Command("D", CommandKind.RESTORE_SNAPSHOT, 200.0, guest_id="A/g1",
                  job=JobDescriptor("j1", 1000.0, 100), snapshot=snap)
    assert c.execute_command(cmd, 200.0).ok
    g = c.guest("A/g1")
    assert g.state is GuestState.RUNNING and g.progress == 120.0
    assert c.state.storage_used == 0


def test_restore_without_local_copy_is_refused():
    c = Client("D")
    snap = SnapshotRecord("A/g1#2", "A/g1", "j1", 2, 100.0, 120.0, 100)
    cmd = Command("D", CommandKind.RESTORE_SNAPSHOT, 200.0, guest_id="A/g1",
                  job=JobDescriptor("j1", 1000.0, 100), snapshot=snap)
    assert not c.execute_command(cmd, 200.0).ok


def test_delete_frees_storage():
    c = Client("B")
    snap = SnapshotRecord("A/g1#1", "A/g1", "j1", 1, 0.0, 0.0, 100)
    c.accept_snapshot(snap)
    assert c.state.storage_used == 100
    c.execute_command(Command("B", CommandKind.DELETE_SNAPSHOT, 1.0, snapshot=snap), 1.0)
    assert c.state.storage_used == 0


def test_copies_beyond_capacity_are_refused():
    c = Client("B", storage_capacity=150)
    assert c.accept_snapshot(SnapshotRecord("x#1", "x", "j", 1, 0, 0, 100))
    assert not c.accept_snapshot(SnapshotRecord("y#1", "y", "j", 1, 0, 0, 100))


def test_resume_on_stopped_guest_is_nacked():
    c = Client("A")
    c.apply_poll_response(PollResponse((), (("A/g1", GuestState.STOPPED),), 0.0), 0.0)
    ack = c.execute_command(Command("A", CommandKind.RESUME_GUEST, 0.0, guest_id="A/g1"), 0.0)
    assert not ack.ok


def test_command_for_another_host_is_a_contract_error():
    with pytest.raises(ContractError):
        Client("A").execute_command(start_cmd(host="B"), 0.0)


def test_completion_time_accounts_for_progress():
    c = running_client()
    assert c.completion_time("A/g1", 400.0) == 1000.0
    g = c.guest("A/g1")
    assert c.finish_job("A/g1", g.token, 1000.0) == "j1"
    assert c.guest("A/g1").state is GuestState.STOPPED


def test_stale_completion_token_is_ignored():
    c = running_client()
    token = c.guest("A/g1").token
    for i in range(3):
        c.resource_monitor(0.9, float(i))
    assert c.finish_job("A/g1", token, 1000.0) is None
