import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wmatch.net.align import AlignPolicy, align, infer_dt, reorder
from wmatch.net.protocol import WatermarkPacket
from wmatch.net.types import Observation, ReceivedPacket
from wmatch.sim import run_scenario

from conftest import lab_config

DT = 0.05


def pkt(addr, k, dt_us=50_000):
    return ReceivedPacket(addr, WatermarkPacket(k, k * dt_us, 1.0 + k, 0.0, 0.01 * k, 0.0))


def obs(vid, k, dt_us=50_000, v=1.0):
    return Observation(k * dt_us, vid, 0.0, 0.0, 0.0, v, 0.0)


def stream(n=40, addrs=("a", "b"), vids=("x", "y")):
    packets = [pkt(a, k) for k in range(n) for a in addrs]
    observations = [obs(v, k) for k in range(1, n + 1) for v in vids]
    return observations, packets


@pytest.fixture(scope="module")
def lab_run():
    cfg = lab_config(duration=10.0)
    return cfg, run_scenario(cfg)


def test_simulated_streams_align_without_drops(lab_run):
    cfg, res = lab_run
    out = align(res.observations, res.packets, AlignPolicy(cfg.dt))
    assert len(out.samples) == len(res.observations) * 2
    for st_ in out.stats.values():
        assert st_.dropped == 0 and st_.aligned == len(res.observations)


def test_packet_precedes_observation_by_one_tick():
    observations, packets = stream()
    out = align(observations, packets, AlignPolicy(DT))
    for s in out.samples:
        assert s.t_us == s.tick * 50_000
        assert s.u_g_v == 1.0 + (s.tick - 1)


def test_one_lost_packet_costs_one_sample(lab_run):
    cfg, res = lab_run
    lost = [rp for rp in res.packets if not (rp.address == "IP_1" and rp.packet.seq == 57)]
    full = align(res.observations, res.packets, AlignPolicy(cfg.dt))
    part = align(res.observations, lost, AlignPolicy(cfg.dt))
    def count(r, a):
        return sum(s.address == a for s in r.samples)
    n_vid = len({o.visual_id for o in res.observations})
    assert count(full, "IP_1") - count(part, "IP_1") == n_vid
    # per (address, visual ID) pair exactly one sample is missing
    for vid in {o.visual_id for o in res.observations}:
        f = sum((s.address, s.visual_id) == ("IP_1", vid) for s in full.samples)
        p = sum((s.address, s.visual_id) == ("IP_1", vid) for s in part.samples)
        assert f - p == 1
    assert count(full, "IP_2") == count(part, "IP_2")
    assert part.stats["IP_1"].dropped_reused == n_vid


def test_reversed_pairs_give_identical_stream(lab_run):
    cfg, res = lab_run
    swapped = []
    for i in range(0, len(res.packets) - 1, 2):
        swapped += [res.packets[i + 1], res.packets[i]]
    swapped += res.packets[len(swapped):]
    a = align(res.observations, res.packets, AlignPolicy(cfg.dt)).samples
    b = align(res.observations, swapped, AlignPolicy(cfg.dt)).samples
    assert a == b


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_shuffles_within_buffer_bound(seed, block):
    observations, packets = stream(n=60)
    rng = np.random.default_rng(seed)
    by_addr = {"a": [p for p in packets if p.address == "a"], "b": [p for p in packets if p.address == "b"]}
    shuffled = []
    for addr, ps in by_addr.items():
        for i in range(0, len(ps), block):
            chunk = ps[i:i + block]
            shuffled += [chunk[j] for j in rng.permutation(len(chunk))]
    ref = align(observations, packets, AlignPolicy(DT))
    got = align(observations, shuffled, AlignPolicy(DT))
    assert got.samples == ref.samples
    assert all(s.late == 0 for s in got.stats.values())


def test_duplicates_are_discarded():
    observations, packets = stream()
    out = align(observations, packets + packets[:10], AlignPolicy(DT))
    ref = align(observations, packets, AlignPolicy(DT))
    assert out.samples == ref.samples
    assert out.stats["a"].duplicates == 5 and out.stats["b"].duplicates == 5


def test_stale_packets_are_dropped():
    observations, packets = stream(n=20)
    # the sender goes silent after tick 9
    cut = [p for p in packets if p.packet.seq < 10]
    out = align(observations, cut, AlignPolicy(DT))
    st_ = out.stats["a"]
    assert st_.aligned == 2 * 10
    assert st_.dropped_stale > 0
    assert st_.aligned + st_.dropped == len(observations)


def test_observation_before_any_packet():
    out = align([obs("x", 0)], [pkt("a", 0)], AlignPolicy(DT))
    assert out.samples == []
    assert out.stats["a"].dropped_no_packet == 1


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.5))
def test_loss_accounting(seed, loss):
    observations, packets = stream(n=50)
    rng = np.random.default_rng(seed)
    kept = [p for p in packets if rng.random() >= loss]
    out = align(observations, kept, AlignPolicy(DT))
    for st_ in out.stats.values():
        assert st_.aligned + st_.dropped == len(observations)
        assert st_.dropped == st_.dropped_no_packet + st_.dropped_stale + st_.dropped_reused


def test_reorder_counts_late_packets():
    ps = [WatermarkPacket(k, k, 0.0, 0.0, 0.0, 0.0) for k in range(12)]
    arrivals = ps[1:11] + [ps[0]] + ps[11:]
    released, dup, late = reorder(arrivals, bound=8)
    assert late == 1 and dup == 0
    assert [p.seq for p in released] == list(range(1, 12))


def test_infer_dt():
    _, packets = stream()
    assert infer_dt(packets) == pytest.approx(0.05)
    assert infer_dt([]) is None
