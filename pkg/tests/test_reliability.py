from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from adhoc_cloud.domain import ContractError, HostRecord, Liveness
from adhoc_cloud.reliability import (HostEvent, HostView, failure_probability,
                                     host_reliability, rank_ready_hosts, record_event)


def oracle(ca, cc, nf):
    # independent restatement of the piecewise score, in exact arithmetic
    if nf == ca:
        return Fraction(0)
    if nf == 0:
        return Fraction(100)
    return Fraction(cc, ca) * 100


@pytest.mark.parametrize("ca,cc,nf,expected", [
    (5, 0, 5, 0.0),
    (7, 7, 0, 100.0),
    (4, 3, 1, 75.0),
])
def test_worked_examples(ca, cc, nf, expected):
    assert host_reliability(ca, cc, nf) == expected


def test_fresh_host_gets_the_prior():
    assert host_reliability(0, 0, 0) == 100.0
    assert host_reliability(0, 0, 0, new_host_prior=50) == 50.0


def test_matches_exact_oracle_on_small_grid():
    for ca in range(1, 21):
        for cc in range(ca + 1):
            for nf in range(ca + 1):
                assert host_reliability(ca, cc, nf) == pytest.approx(float(oracle(ca, cc, nf)),
                                                                      abs=1e-9)


@pytest.mark.parametrize("args", [(2, 3, 0), (2, 0, 3), (-1, 0, 0)])
def test_inconsistent_counters_are_rejected(args):
    with pytest.raises(ContractError):
        host_reliability(*args)


@pytest.mark.parametrize("rel,p", [(100, 0.01), (75, 0.25), (0, 0.99)])
def test_failure_probability_examples(rel, p):
    assert failure_probability(rel) == pytest.approx(p)


def test_failure_probability_clamp_sweep():
    for rel in range(101):
        expected = min(max((100 - rel) / 100, 0.01), 0.99)
        assert failure_probability(rel) == pytest.approx(expected, abs=1e-12)
        assert 0.01 <= failure_probability(rel) <= 0.99


def test_failure_probability_rejects_out_of_range():
    with pytest.raises(ContractError):
        failure_probability(101)


def view(host, rel, **kw):
    return HostView(host, rel, failure_probability(rel), **kw)


def test_ranking_orders_by_reliability_and_drops_down_hosts():
    hosts = [view("A", 90), view("B", 95), view("C", 99, liveness=Liveness.DOWN)]
    assert rank_ready_hosts(hosts) == ["B", "A"]


def test_ranking_ties_go_to_lower_id():
    assert rank_ready_hosts([view("B", 80), view("A", 80)]) == ["A", "B"]


def test_ranking_empty():
    assert rank_ready_hosts([]) == []


def test_ranking_skips_busy_and_unready_hosts():
    hosts = [view("A", 99, in_use=True), view("B", 98, guest_ready=False), view("C", 10)]
    assert rank_ready_hosts(hosts) == ["C"]


@given(st.lists(st.tuples(st.sampled_from("ABCDEFGH"), st.integers(0, 100)),
                max_size=8, unique_by=lambda t: t[0]))
def test_ranking_is_input_order_independent(pairs):
    views = [view(h, r) for h, r in pairs]
    expected = [h for h, _ in sorted(pairs, key=lambda t: (-t[1], t[0]))]
    assert rank_ready_hosts(views) == expected
    assert rank_ready_hosts(list(reversed(views))) == expected


def test_completion_updates_counter_and_score():
    host, rv = record_event(HostRecord("A", jobs_assigned=1), HostEvent.JOB_COMPLETED)
    assert (host.jobs_assigned, host.jobs_completed, host.failures) == (1, 1, 0)
    assert rv.reliability == 100


def test_host_failure_on_single_job_zeroes_score():
    host, rv = record_event(HostRecord("A", jobs_assigned=1), HostEvent.HOST_FAILURE)
    assert host.failures == 1
    assert rv.reliability == 0


def test_guest_failure_halves_score():
    host, rv = record_event(HostRecord("A", jobs_assigned=2, jobs_completed=1),
                            HostEvent.GUEST_FAILURE)
    assert (host.jobs_assigned, host.jobs_completed, host.failures) == (2, 1, 1)
    assert rv.reliability == 50


def test_assignment_does_not_recompute():
    host, rv = record_event(HostRecord("A"), HostEvent.JOB_ASSIGNED)
    assert host.jobs_assigned == 1
    assert rv is None


def test_failure_of_idle_host_leaves_counters_alone():
    idle = HostRecord("A", jobs_assigned=3, jobs_completed=3)
    host, rv = record_event(idle, HostEvent.HOST_FAILURE)
    assert host == idle
    assert rv.reliability == 100


def test_completion_without_assignment_is_a_contract_error():
    with pytest.raises(ContractError):
        record_event(HostRecord("A"), HostEvent.JOB_COMPLETED)


@given(st.lists(st.sampled_from(list(HostEvent)), max_size=60))
def test_event_sequences_keep_counters_consistent(events):
    host = HostRecord("A")
    for event in events:
        if event is HostEvent.JOB_COMPLETED and host.outstanding_jobs == 0:
            continue
        host, rv = record_event(host, event)
        assert 0 <= host.jobs_completed <= host.jobs_assigned
        assert 0 <= host.failures <= host.jobs_assigned
        assert host.outstanding_jobs >= 0
        if rv is not None and host.jobs_assigned:
            expected = oracle(host.jobs_assigned, host.jobs_completed, host.failures)
            assert rv.reliability == pytest.approx(float(expected), abs=1e-9)
